#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "ofp/bloch.hpp"
#include "ofp/ensemble.hpp"

namespace ofp {

/// Incremental 64-bit FNV-1a. Doubles are hashed by their bit pattern.
class Fnv1a {
public:
    Fnv1a& bytes(std::span<const std::byte> data) noexcept;
    Fnv1a& str(std::string_view s) noexcept;
    Fnv1a& f64(double x) noexcept;
    Fnv1a& u64(std::uint64_t x) noexcept;
    [[nodiscard]] std::uint64_t digest() const noexcept { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t hash_sequence(const PulseSequence& seq);
std::uint64_t hash_ensemble_spec(const EnsembleSpec& spec);

/// Fixed-width lowercase hex, 16 characters.
std::string hex64(std::uint64_t x);
/// Inverse of hex64; throws ParseError on malformed input.
std::uint64_t parse_hex64(std::string_view s);

}  // namespace ofp
