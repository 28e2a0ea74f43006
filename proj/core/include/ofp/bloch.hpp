#pragma once

// Step-wise propagation of spin-1/2 isochromats under trains of delta pulses.
//
// Timing convention: pulse k (k = 1..N_p) acts at t = kT and is preceded by a
// free-relaxation interval of length T. The signal is sampled immediately
// after each pulse. Starting from equilibrium the first interval is a no-op.
//
// Sign convention: the rotation generator is Omega x M with
// Omega = alpha * (theta_x, theta_y, 0), so an x pulse of area pi/2 takes
// (0, 0, 1) to (0, -1, 0). Free precession at offset w rotates the transverse
// plane counter-clockwise: (mx, my) -> (mx cos wt - my sin wt, mx sin wt + my cos wt).

#include <cmath>
#include <cstddef>
#include <vector>

namespace ofp {

struct RelaxationParams {
    double t1 = 1.0;  // s
    double t2 = 0.1;  // s

    /// Throws InvalidInput unless t1 > 0, t2 > 0 and t2 <= 2 t1.
    void validate() const;
    friend bool operator==(const RelaxationParams&, const RelaxationParams&) = default;
};

/// Magnetization of one isochromat. The homogeneous component of the
/// extended Bloch vector is implicit and always 1.
struct BlochState {
    double mx = 0.0;
    double my = 0.0;
    double mz = 1.0;

    static constexpr BlochState equilibrium() noexcept { return {0.0, 0.0, 1.0}; }
    [[nodiscard]] double norm() const noexcept { return std::sqrt(mx * mx + my * my + mz * mz); }
    friend bool operator==(const BlochState&, const BlochState&) = default;
};

/// Rotation areas of one delta pulse, radians.
struct Pulse {
    double theta_x = 0.0;
    double theta_y = 0.0;
    friend bool operator==(const Pulse&, const Pulse&) = default;
};

struct PulseSequence {
    std::vector<Pulse> pulses;
    double delay_t = 0.01;  // s, time between pulses

    [[nodiscard]] std::size_t count() const noexcept { return pulses.size(); }
    /// Throws InvalidInput on delay_t <= 0 or non-finite areas.
    void validate() const;
    friend bool operator==(const PulseSequence&, const PulseSequence&) = default;
};

struct Isochromat {
    double offset = 0.0;    // rad/s
    double rf_scale = 1.0;  // alpha
    double weight = 1.0;
};

struct SpinEnsemble {
    std::vector<Isochromat> isochromats;
    RelaxationParams relaxation;

    /// Checks weights (non-negative, summing to 1 within 1e-12), rf scales and relaxation.
    void validate() const;
};

struct LorentzianSpec {
    double center = 0.0;             // rad/s
    double fwhm = 20.0;              // rad/s
    int n_points = 101;
    double support_halfwidth = 5.0;  // in multiples of fwhm
};

struct Sample {
    double mx = 0.0;
    double my = 0.0;
    [[nodiscard]] double squared_modulus() const noexcept { return mx * mx + my * my; }
    friend bool operator==(const Sample&, const Sample&) = default;
};

/// Ensemble-averaged transverse magnetization sampled after each pulse.
struct Trajectory {
    std::vector<Sample> samples;

    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
    [[nodiscard]] bool empty() const noexcept { return samples.empty(); }
    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

BlochState rotate_pulse(const BlochState& state, double theta_x, double theta_y, double rf_scale);

BlochState relax_free(const BlochState& state, double duration, const RelaxationParams& relaxation,
                      double offset);

/// States sampled just after each pulse; one entry per pulse.
std::vector<BlochState> propagate_sequence(const BlochState& initial, const PulseSequence& seq,
                                           const Isochromat& iso,
                                           const RelaxationParams& relaxation);

/// Unnormalized Lorentzian line shape; equals 1 at the center and 1/2 at center +- fwhm/2.
double lorentzian_density(double omega, double center, double fwhm);

SpinEnsemble make_lorentzian_ensemble(const LorentzianSpec& spec, double rf_scale,
                                      const RelaxationParams& relaxation);

/// Weighted average of (mx, my) over the ensemble, reduced in isochromat order.
Trajectory simulate_fingerprint(const SpinEnsemble& ensemble, const PulseSequence& seq,
                                const BlochState& initial = BlochState::equilibrium());

}  // namespace ofp
