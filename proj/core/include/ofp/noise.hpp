#pragma once

// Seeded additive Gaussian noise and Monte Carlo width studies.
//
// Draw d of every study uses the sub-seed derive_seed(master, d) for all
// noise levels, so the same normalized noise realization is scaled by each
// epsilon and adding draws never changes existing ones.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ofp/bloch.hpp"
#include "ofp/estimator.hpp"
#include "ofp/fingerprint.hpp"

namespace ofp {

struct NoiseSpec {
    double epsilon = 0.0;  // standard deviation, fraction of the Bloch-ball radius
    std::uint64_t seed = 0;
};

/// g + epsilon * N(0, 1), independently per sample and per component.
Trajectory add_noise(const Trajectory& g, const NoiseSpec& spec);
std::vector<IrSample> add_noise(std::span<const IrSample> g, const NoiseSpec& spec);

/// One noisy estimation: returns the estimate, throws on failure.
using DrawFn = std::function<double(double epsilon, std::uint64_t seed)>;

enum class WidthMethod {
    kStdDev,  // sample standard deviation
    kMad      // 1.4826 * median absolute deviation
};

struct DrawOutcome {
    double estimate = 0.0;
    bool ok = false;
};

/// Persistent store of finished draws, keyed by (epsilon index, draw index).
class DrawCache {
public:
    virtual ~DrawCache() = default;
    virtual std::optional<DrawOutcome> lookup(std::size_t eps_index, std::size_t draw) = 0;
    virtual void store(std::size_t eps_index, std::size_t draw, const DrawOutcome& outcome) = 0;
};

struct WidthOptions {
    int draws = 30;
    std::uint64_t master_seed = 1;
    WidthMethod width = WidthMethod::kStdDev;
    double min_success = 0.8;
    int threads = 1;
    DrawCache* cache = nullptr;
};

struct WidthRow {
    double epsilon = 0.0;
    double mean = 0.0;
    double width = 0.0;
    int draws = 0;
    int failures = 0;
    std::vector<double> estimates;  // successful draws, in draw order
};

struct WidthReport {
    std::string method;
    std::vector<WidthRow> rows;
};

double width_of(std::span<const double> estimates, WidthMethod method);

/// Runs `draws` noisy estimations at every epsilon. Throws ScenarioError when
/// fewer than min_success * draws estimations succeed at some epsilon.
WidthReport width_study(const DrawFn& draw, std::span<const double> eps_grid,
                        const WidthOptions& options, std::string method);

struct RatioRow {
    double epsilon = 0.0;
    std::optional<double> ratio;  // empty when the denominator width is zero
    double std_error = 0.0;
};

/// Per-epsilon width(a) / width(b) with standard errors propagated from
/// se(width) = width / sqrt(2 (n - 1)). Throws DimensionError on grid mismatch.
std::vector<RatioRow> compare_methods(const WidthReport& a, const WidthReport& b);

/// Dictionary match plus refinement of `parameter` on clean + noise. The
/// returned function owns its copy of the dictionary.
DrawFn fingerprint_draw(Dictionary dict, Trajectory clean, FitConfig config,
                        std::string parameter);

/// Inversion-recovery T1 on the ideal curve plus noise.
DrawFn inversion_recovery_draw(double t1, std::size_t n_points, double spacing,
                               IrFitConfig config = {});

}  // namespace ofp
