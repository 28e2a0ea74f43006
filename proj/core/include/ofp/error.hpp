#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ofp {

/// Non-finite or out-of-range argument.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Two signals or matrices whose shapes do not agree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A signal with zero norm was given to an operation that normalizes it.
class DegenerateSignal : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed input file. `line` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A Monte Carlo scenario that could not produce a usable result.
class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ofp
