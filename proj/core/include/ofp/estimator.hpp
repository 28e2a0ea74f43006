#pragma once

// Two-stage parameter estimation: nearest dictionary entry, then a descent on
// D over the free parameters with finite-difference gradients. Also holds the
// inversion-recovery baseline and the T2* / offset-width degeneracy scan.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ofp/bloch.hpp"
#include "ofp/ensemble.hpp"
#include "ofp/fingerprint.hpp"

namespace ofp {

enum class FitStrategy {
    kGradientDescent,    // projected steepest descent with Armijo backtracking
    kLevenbergMarquardt  // damped Gauss-Newton on the normalized residual vector
};

struct FitConfig {
    std::vector<std::string> free_parameters{std::string(param::kT1)};
    double fd_step = 1e-4;     // relative central-difference step
    int max_iterations = 200;
    double tolerance = 1e-6;   // relative parameter update that counts as converged
    FitStrategy strategy = FitStrategy::kGradientDescent;

    void validate() const;
};

struct EstimationReport {
    std::size_t matched_index = 0;
    ParameterPoint matched_parameters;
    double matched_residual = 0.0;
    bool tie = false;
    ParameterPoint refined_parameters;
    double final_residual = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> residual_history;  // residual after each accepted iteration, row 0 = start
    std::vector<double> entry_residuals;   // D against every dictionary entry
};

/// Minimizes D[f(S), g] over the free parameters starting at `start`.
/// Parameters absent from `start` take their value from `ensemble`.
/// Throws DegenerateSignal if a simulated signal vanishes during the search.
EstimationReport fit_parameters(const Trajectory& g, const PulseSequence& seq,
                                const EnsembleSpec& ensemble, const ParameterPoint& start,
                                const FitConfig& config);

/// recognize() followed by fit_parameters() from the matched entry.
EstimationReport estimate(const Dictionary& dict, const Trajectory& g, const FitConfig& config);

struct IrSample {
    double t = 0.0;      // s
    double value = 0.0;  // measured Mz
};

struct IrFitConfig {
    int max_iterations = 2000;
    double tolerance = 1e-10;  // relative update
};

struct IrEstimate {
    double t1 = 0.0;
    double residual = 0.0;  // sum of squared deviations
    int iterations = 0;
    bool converged = false;
};

/// Ideal inversion recovery, Mz(t) = 1 - 2 exp(-t/T1), sampled at n points
/// spaced by `spacing` starting at t = 0.
std::vector<IrSample> inversion_recovery_signal(double t1, std::size_t n, double spacing);

/// Least-squares T1 from inversion-recovery samples by 1-D gradient descent.
IrEstimate ir_estimate(std::span<const IrSample> samples, const IrFitConfig& config = {});

/// Effective transverse relaxation time, 1/T2* = 1/T2 + fwhm/2.
double t2_star(double t2, double fwhm);

struct ScanRow {
    double fwhm = 0.0;
    double t2 = 0.0;
    double center = 0.0;
    double residual = 0.0;
    double t2_star = 0.0;
    bool ok = false;
    std::string error;
};

/// For every fixed fwhm, fits the free parameters (which must not include the
/// fwhm) and records the fitted T2, center and residual. Failed points are
/// recorded with ok = false and the scan continues.
std::vector<ScanRow> correlation_scan(const Trajectory& g, const PulseSequence& seq,
                                      const EnsembleSpec& ensemble, const ParameterPoint& start,
                                      std::span<const double> fwhm_grid, const FitConfig& config,
                                      int threads = 1);

struct Plateau {
    std::size_t first = 0;
    std::size_t last = 0;   // inclusive
    std::size_t argmin = 0;
    [[nodiscard]] std::size_t size() const { return last - first + 1; }
};

/// Contiguous run of successful scan rows around the minimum residual whose
/// residual stays within (1 + rel_tolerance) of the minimum.
Plateau find_plateau(std::span<const ScanRow> rows, double rel_tolerance);

}  // namespace ofp
