#pragma once

// Gradient ascent on the pulse areas of a delta-pulse train so that the
// fingerprints of a set of systems become maximally distinguishable.
//
// Gradients are exact: every system is propagated forward once, the
// derivative of the objective with respect to each sampled signal is formed,
// and a single backward adjoint sweep per isochromat accumulates the partials
// with respect to every pulse. Cost is linear in the number of pulses.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ofp/bloch.hpp"
#include "ofp/ensemble.hpp"
#include "ofp/fingerprint.hpp"

namespace ofp {

/// One dictionary system as seen by the optimizer.
struct System {
    SpinEnsemble ensemble;
    BlochState initial = BlochState::equilibrium();
};

std::vector<System> make_systems(const EnsembleSpec& base, std::span<const ParameterPoint> points);

enum class Objective {
    kFigureOfMerit,  // C_N over normalized signals
    kTracking,       // 1/2 sum_{m<n} mu_mn sum_k |f_m(k) - f_n(k)|^2, un-normalized
};

enum class ControlAxes { kX, kXY };

/// 1/2 sum_{m<n} mu_mn |f_m - f_n|^2 over all samples and both components.
double tracking_objective(std::span<const Trajectory> signals, const WeightMatrix& weights);

/// Objective evaluated by plain forward simulation.
double objective_value(std::span<const System> systems, const PulseSequence& seq,
                       const WeightMatrix& weights, Objective objective = Objective::kFigureOfMerit);

struct ObjectiveGradient {
    double value = 0.0;
    std::vector<Pulse> gradient;  // d objective / d (theta_x, theta_y) per pulse

    [[nodiscard]] double gradient_norm() const;
};

/// Throws DegenerateSignal for a zero-norm fingerprint under kFigureOfMerit.
ObjectiveGradient objective_gradient(std::span<const System> systems, const PulseSequence& seq,
                                     const WeightMatrix& weights,
                                     Objective objective = Objective::kFigureOfMerit,
                                     int threads = 1);

struct OptimizerConfig {
    int max_iterations = 1000;
    double step_size = 0.05;         // largest per-pulse change of the first trial step, rad
    double backtrack = 0.5;
    double growth = 1.2;
    double gradient_tolerance = 1e-12;
    std::uint64_t seed = 1;
    int multi_starts = 5;
    double init_amplitude = 0.3;     // rad, bound of the random initial field
    ControlAxes axes = ControlAxes::kXY;
    std::optional<double> clip;      // |theta| bound per axis, applied after every step
    Objective objective = Objective::kFigureOfMerit;
    int threads = 1;

    void validate() const;
};

struct OptimizationTrace {
    std::vector<double> values;      // objective at iteration 0 (initial field) .. last
    std::vector<double> grad_norms;
    std::vector<double> steps;       // Euclidean length of the accepted update, 0 for row 0
    double wall_time_s = 0.0;
    bool converged = false;
    std::string stop_reason;
};

struct OptimizationResult {
    PulseSequence field;
    OptimizationTrace trace;
    std::uint64_t seed = 0;          // seed of the start that produced `field`
    int start_index = 0;

    [[nodiscard]] double final_value() const { return trace.values.back(); }
};

/// Monotone ascent from `initial` with backtracking on the step length.
OptimizationResult optimize_field(std::span<const System> systems, const PulseSequence& initial,
                                  const OptimizerConfig& config, const WeightMatrix& weights);

/// Runs `config.multi_starts` ascents from seeded random fields of amplitude
/// `init_amplitude` and keeps the best (lowest start index on ties).
OptimizationResult optimize_multistart(std::span<const System> systems, std::size_t n_pulses,
                                       double delay_t, const OptimizerConfig& config,
                                       const WeightMatrix& weights);

/// i.i.d. uniform areas in [-bound, bound] per pulse and axis (y held at 0 for kX).
PulseSequence random_field(std::size_t n_pulses, double delay_t, double amplitude_bound,
                           std::uint64_t seed, ControlAxes axes = ControlAxes::kXY);

}  // namespace ofp
