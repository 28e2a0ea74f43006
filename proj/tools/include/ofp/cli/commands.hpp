#pragma once
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ofp/cli/config.hpp"

namespace ofp::cli {

enum ExitCode : int { kSuccess = 0, kRuntimeFailure = 1, kInputError = 2 };

struct Options {
    std::string command;
    std::filesystem::path config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
    std::optional<int> threads;
    int random_baseline = 0;
    std::optional<ControlAxes> axes;
    std::optional<std::filesystem::path> signal;
    bool gnuplot = false;
};

/// --threads, else FP_THREADS, else 1.
int resolve_threads(const std::optional<int>& flag);

/// Applies command-line overrides to a loaded configuration.
void apply_overrides(ExperimentConfig& config, const Options& options);

/// Runs one subcommand. Throws on failure; progress goes to `log`.
void run_command(const Options& options, std::ostream& log);

/// Full command line entry point. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ofp::cli
