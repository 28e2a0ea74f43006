#include "ofp/bloch.hpp"

#include <map>
#include <string>

#include <Eigen/Core>

#include "ofp/error.hpp"
#include "ofp/rotation.hpp"

namespace ofp {

namespace {

void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) throw InvalidInput(std::string(what) + " must be finite");
}

// Free evolution over one interval, factored so it can be reused for every pulse.
struct FreeStep {
    double e1, e2, c, s;

    FreeStep(double duration, const RelaxationParams& relaxation, double offset)
        : e1(std::exp(-duration / relaxation.t1)),
          e2(std::exp(-duration / relaxation.t2)),
          c(std::cos(offset * duration)),
          s(std::sin(offset * duration)) {}

    [[nodiscard]] Eigen::Vector3d apply(const Eigen::Vector3d& m) const {
        return {e2 * (c * m.x() - s * m.y()), e2 * (s * m.x() + c * m.y()),
                1.0 - e1 + e1 * m.z()};
    }
};

Eigen::Vector3d to_vec(const BlochState& s) { return {s.mx, s.my, s.mz}; }
BlochState to_state(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

void RelaxationParams::validate() const {
    if (!(std::isfinite(t1) && t1 > 0.0)) throw InvalidInput("t1 must be positive and finite");
    if (!(std::isfinite(t2) && t2 > 0.0)) throw InvalidInput("t2 must be positive and finite");
    if (t2 > 2.0 * t1) throw InvalidInput("t2 must not exceed 2*t1");
}

void PulseSequence::validate() const {
    if (!(std::isfinite(delay_t) && delay_t > 0.0))
        throw InvalidInput("delay_t must be positive and finite");
    for (const auto& p : pulses) {
        require_finite(p.theta_x, "theta_x");
        require_finite(p.theta_y, "theta_y");
    }
}

void SpinEnsemble::validate() const {
    relaxation.validate();
    if (isochromats.empty()) throw InvalidInput("ensemble has no isochromats");
    double total = 0.0;
    for (const auto& iso : isochromats) {
        require_finite(iso.offset, "offset");
        if (!(iso.weight >= 0.0)) throw InvalidInput("isochromat weight must be >= 0");
        if (!(iso.rf_scale > 0.0 && std::isfinite(iso.rf_scale)))
            throw InvalidInput("rf_scale must be positive and finite");
        total += iso.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidInput("ensemble weights must sum to 1");
}

BlochState rotate_pulse(const BlochState& state, double theta_x, double theta_y, double rf_scale) {
    require_finite(theta_x, "theta_x");
    require_finite(theta_y, "theta_y");
    require_finite(rf_scale, "rf_scale");
    require_finite(state.mx, "mx");
    require_finite(state.my, "my");
    require_finite(state.mz, "mz");
    if (theta_x == 0.0 && theta_y == 0.0) return state;
    const Eigen::Vector3d axis(rf_scale * theta_x, rf_scale * theta_y, 0.0);
    return to_state(rotation_matrix(axis) * to_vec(state));
}

BlochState relax_free(const BlochState& state, double duration, const RelaxationParams& relaxation,
                      double offset) {
    if (!(duration >= 0.0)) throw InvalidInput("duration must be >= 0");
    require_finite(offset, "offset");
    relaxation.validate();
    if (duration == 0.0) return state;
    if (std::isinf(duration)) return BlochState::equilibrium();
    return to_state(FreeStep(duration, relaxation, offset).apply(to_vec(state)));
}

std::vector<BlochState> propagate_sequence(const BlochState& initial, const PulseSequence& seq,
                                           const Isochromat& iso,
                                           const RelaxationParams& relaxation) {
    if (seq.pulses.empty()) throw InvalidInput("pulse sequence is empty");
    seq.validate();
    relaxation.validate();

    const FreeStep free(seq.delay_t, relaxation, iso.offset);
    std::vector<BlochState> out;
    out.reserve(seq.count());
    Eigen::Vector3d m = to_vec(initial);
    for (const auto& p : seq.pulses) {
        m = free.apply(m);
        m = rotation_matrix({iso.rf_scale * p.theta_x, iso.rf_scale * p.theta_y, 0.0}) * m;
        out.push_back(to_state(m));
    }
    return out;
}

double lorentzian_density(double omega, double center, double fwhm) {
    const double u = 2.0 * (omega - center) / fwhm;
    return 1.0 / (1.0 + u * u);
}

SpinEnsemble make_lorentzian_ensemble(const LorentzianSpec& spec, double rf_scale,
                                      const RelaxationParams& relaxation) {
    if (spec.n_points < 1) throw InvalidInput("n_points must be >= 1");
    if (!(spec.fwhm > 0.0 && std::isfinite(spec.fwhm))) throw InvalidInput("fwhm must be > 0");
    if (!(spec.support_halfwidth >= 0.0)) throw InvalidInput("support_halfwidth must be >= 0");
    require_finite(spec.center, "center");

    SpinEnsemble ens;
    ens.relaxation = relaxation;
    if (spec.n_points == 1) {
        ens.isochromats.push_back({spec.center, rf_scale, 1.0});
        return ens;
    }
    const double half = spec.support_halfwidth * spec.fwhm;
    const double lo = spec.center - half;
    const double step = 2.0 * half / (spec.n_points - 1);
    double total = 0.0;
    ens.isochromats.reserve(static_cast<std::size_t>(spec.n_points));
    for (int i = 0; i < spec.n_points; ++i) {
        const double w = lo + step * i;
        const double rho = lorentzian_density(w, spec.center, spec.fwhm);
        ens.isochromats.push_back({w, rf_scale, rho});
        total += rho;
    }
    for (auto& iso : ens.isochromats) iso.weight /= total;
    return ens;
}

Trajectory simulate_fingerprint(const SpinEnsemble& ensemble, const PulseSequence& seq,
                                const BlochState& initial) {
    if (seq.pulses.empty()) throw InvalidInput("pulse sequence is empty");
    seq.validate();
    ensemble.validate();

    const std::size_t np = seq.count();
    // Rotations depend only on (pulse, rf_scale); most ensembles share one scale.
    std::map<double, std::vector<Eigen::Matrix3d>> rotations;
    for (const auto& iso : ensemble.isochromats) {
        auto [it, inserted] = rotations.try_emplace(iso.rf_scale);
        if (!inserted) continue;
        it->second.reserve(np);
        for (const auto& p : seq.pulses)
            it->second.push_back(
                rotation_matrix({iso.rf_scale * p.theta_x, iso.rf_scale * p.theta_y, 0.0}));
    }

    std::vector<double> sx(np, 0.0), sy(np, 0.0);
    for (const auto& iso : ensemble.isochromats) {
        const auto& rot = rotations.at(iso.rf_scale);
        const FreeStep free(seq.delay_t, ensemble.relaxation, iso.offset);
        Eigen::Vector3d m(initial.mx, initial.my, initial.mz);
        for (std::size_t k = 0; k < np; ++k) {
            m = rot[k] * free.apply(m);
            sx[k] += iso.weight * m.x();
            sy[k] += iso.weight * m.y();
        }
    }

    Trajectory traj;
    traj.samples.resize(np);
    for (std::size_t k = 0; k < np; ++k) traj.samples[k] = {sx[k], sy[k]};
    return traj;
}

}  // namespace ofp
