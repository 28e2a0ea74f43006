#pragma once
// Experiment description consumed by every subcommand. Stored as JSON; every
// physical quantity carries its unit in the key name.
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ofp/ensemble.hpp"
#include "ofp/error.hpp"
#include "ofp/estimator.hpp"
#include "ofp/grape.hpp"
#include "ofp/noise.hpp"

namespace ofp::cli {

/// Bad or inconsistent configuration. `where` is a JSON pointer or a line.
class ConfigError : public InvalidInput {
public:
    ConfigError(const std::string& where, const std::string& what)
        : InvalidInput(where + ": " + what) {}
};

enum class FieldSourceKind { kFile, kOptimize, kRandom };

struct FieldSource {
    FieldSourceKind kind = FieldSourceKind::kOptimize;
    std::filesystem::path path;  // resolved against the config directory
    std::size_t n_pulses = 500;
    double delay_t = 0.01;
    double amplitude = 3.141592653589793;
    std::uint64_t seed = 1000;
    ControlAxes axes = ControlAxes::kXY;
};

struct RandomBaseline {
    double amplitude = 3.141592653589793;
    std::uint64_t seed = 1000;  // field i of a baseline uses seed + i
};

struct NoiseConfig {
    std::vector<double> epsilons{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
    int draws = 30;
    std::uint64_t seed = 1;
    WidthMethod width = WidthMethod::kStdDev;
    double min_success = 0.8;
    std::string parameter{param::kT1};
};

struct IrConfig {
    std::size_t n_points = 120;
    double spacing = 0.01;
    IrFitConfig fit;
};

struct ScanConfig {
    std::vector<double> fwhm_grid;
    double epsilon = 0.01;
    std::uint64_t seed = 7;
    double plateau_rel_tol = 0.05;
    ParameterPoint start;
};

struct ExperimentConfig {
    std::string scenario = "unnamed";
    std::filesystem::path output_dir = ".";
    EnsembleSpec ensemble;
    std::vector<std::pair<std::string, std::vector<double>>> grid;
    ParameterPoint truth;
    FieldSource field;
    OptimizerConfig optimizer;
    RandomBaseline baseline;
    FitConfig estimator;
    NoiseConfig noise;
    IrConfig ir;
    ScanConfig scan;

    /// Hash of the file-sourced field, 0 for other sources.
    std::uint64_t field_file_hash = 0;

    [[nodiscard]] std::vector<ParameterPoint> points() const;
    /// Canonical JSON of the effective configuration.
    [[nodiscard]] std::string canonical() const;
    [[nodiscard]] std::uint64_t hash() const;
};

/// Parses `text`; relative paths are resolved against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace ofp::cli
