#include "ofp/grape.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include <Eigen/Core>

#include "ofp/error.hpp"
#include "ofp/parallel.hpp"
#include "ofp/random.hpp"
#include "ofp/rotation.hpp"

namespace ofp {

namespace {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

std::vector<Trajectory> simulate_all(std::span<const System> systems, const PulseSequence& seq) {
    std::vector<Trajectory> out;
    out.reserve(systems.size());
    for (const auto& s : systems) out.push_back(simulate_fingerprint(s.ensemble, seq, s.initial));
    return out;
}

double symmetric_weight(const WeightMatrix& w, std::size_t m, std::size_t n) {
    return 0.5 * (w(m, n) + w(n, m));
}

// d objective / d f_j(k) for every system j and sample k.
std::vector<std::vector<Vec2>> signal_adjoints(std::span<const Trajectory> f,
                                               const WeightMatrix& weights, Objective objective) {
    const std::size_t n = f.size();
    const std::size_t np = f.front().size();
    std::vector<std::vector<Vec2>> lambda(n, std::vector<Vec2>(np, Vec2::Zero()));

    auto at = [](const Trajectory& t, std::size_t k) { return Vec2(t.samples[k].mx, t.samples[k].my); };

    if (objective == Objective::kTracking) {
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t m = 0; m < n; ++m) {
                if (m == j) continue;
                const double w = symmetric_weight(weights, j, m);
                for (std::size_t k = 0; k < np; ++k) lambda[j][k] += w * (at(f[j], k) - at(f[m], k));
            }
        return lambda;
    }

    // C_N = 1/N^2 sum_{m,n} mu_mn (1 - u_m . u_n) with u = f/|f|. The partial
    // with respect to u_j is projected onto the tangent space of the unit
    // sphere and divided by |f_j| to obtain the partial with respect to f_j.
    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        norms[j] = norm(f[j]);
        if (!(norms[j] > 0.0)) throw DegenerateSignal("fingerprint " + std::to_string(j) + " has zero norm");
    }
    const double scale = 1.0 / static_cast<double>(n * n);
    for (std::size_t j = 0; j < n; ++j) {
        auto& g = lambda[j];
        for (std::size_t m = 0; m < n; ++m) {
            if (m == j) continue;
            const double w = -scale * (weights(j, m) + weights(m, j)) / norms[m];
            for (std::size_t k = 0; k < np; ++k) g[k] += w * at(f[m], k);
        }
        double radial = 0.0;
        for (std::size_t k = 0; k < np; ++k) radial += g[k].dot(at(f[j], k));
        radial /= norms[j];
        for (std::size_t k = 0; k < np; ++k)
            g[k] = (g[k] - radial * at(f[j], k) / norms[j]) / norms[j];
    }
    return lambda;
}

// Adds the pulse-area gradient of sum_k lambda(k) . f(k) for one system.
void backpropagate(const System& system, const PulseSequence& seq, std::span<const Vec2> lambda,
                   std::vector<Pulse>& grad) {
    const std::size_t np = seq.count();
    const auto& relax = system.ensemble.relaxation;
    const double e1 = std::exp(-seq.delay_t / relax.t1);
    const double e2 = std::exp(-seq.delay_t / relax.t2);

    std::map<double, std::vector<RotationJacobian>> jacobians;
    for (const auto& iso : system.ensemble.isochromats) {
        auto [it, inserted] = jacobians.try_emplace(iso.rf_scale);
        if (!inserted) continue;
        it->second.reserve(np);
        for (const auto& p : seq.pulses)
            it->second.push_back(
                rotation_with_jacobian({iso.rf_scale * p.theta_x, iso.rf_scale * p.theta_y, 0.0}));
    }

    std::vector<Vec3> before(np);  // state just before pulse k
    for (const auto& iso : system.ensemble.isochromats) {
        if (iso.weight == 0.0) continue;
        const auto& jac = jacobians.at(iso.rf_scale);
        const double c = std::cos(iso.offset * seq.delay_t);
        const double s = std::sin(iso.offset * seq.delay_t);
        Mat3 e;
        e << e2 * c, -e2 * s, 0.0,  //
            e2 * s, e2 * c, 0.0,    //
            0.0, 0.0, e1;
        const Vec3 recovery(0.0, 0.0, 1.0 - e1);

        Vec3 m(system.initial.mx, system.initial.my, system.initial.mz);
        for (std::size_t k = 0; k < np; ++k) {
            before[k] = e * m + recovery;
            m = jac[k].r * before[k];
        }

        // q = d objective / d (state just after pulse k)
        Vec3 q = Vec3::Zero();
        for (std::size_t k = np; k-- > 0;) {
            q.x() += iso.weight * lambda[k].x();
            q.y() += iso.weight * lambda[k].y();
            grad[k].theta_x += iso.rf_scale * q.dot(jac[k].dr_dx * before[k]);
            grad[k].theta_y += iso.rf_scale * q.dot(jac[k].dr_dy * before[k]);
            q = e.transpose() * (jac[k].r.transpose() * q);
        }
    }
}

PulseSequence step_field(const PulseSequence& seq, const std::vector<Pulse>& grad, double eps,
                         const OptimizerConfig& config) {
    PulseSequence out = seq;
    for (std::size_t k = 0; k < out.pulses.size(); ++k) {
        out.pulses[k].theta_x += eps * grad[k].theta_x;
        if (config.axes == ControlAxes::kXY) out.pulses[k].theta_y += eps * grad[k].theta_y;
        if (config.clip) {
            out.pulses[k].theta_x = std::clamp(out.pulses[k].theta_x, -*config.clip, *config.clip);
            out.pulses[k].theta_y = std::clamp(out.pulses[k].theta_y, -*config.clip, *config.clip);
        }
    }
    return out;
}

double step_length(const PulseSequence& a, const PulseSequence& b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.pulses.size(); ++k) {
        const double dx = a.pulses[k].theta_x - b.pulses[k].theta_x;
        const double dy = a.pulses[k].theta_y - b.pulses[k].theta_y;
        acc += dx * dx + dy * dy;
    }
    return std::sqrt(acc);
}

double max_abs(const std::vector<Pulse>& g) {
    double m = 0.0;
    for (const auto& p : g) m = std::max({m, std::abs(p.theta_x), std::abs(p.theta_y)});
    return m;
}

}  // namespace

std::vector<System> make_systems(const EnsembleSpec& base, std::span<const ParameterPoint> points) {
    std::vector<System> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back({make_ensemble(apply_parameters(base, p)), {}});
    return out;
}

double tracking_objective(std::span<const Trajectory> signals, const WeightMatrix& weights) {
    if (weights.size() != signals.size()) throw DimensionError("weight matrix size differs from system count");
    double acc = 0.0;
    for (std::size_t m = 0; m < signals.size(); ++m)
        for (std::size_t n = m + 1; n < signals.size(); ++n) {
            if (signals[m].size() != signals[n].size()) throw DimensionError("trajectory lengths differ");
            double d = 0.0;
            for (std::size_t k = 0; k < signals[m].size(); ++k) {
                const double dx = signals[m].samples[k].mx - signals[n].samples[k].mx;
                const double dy = signals[m].samples[k].my - signals[n].samples[k].my;
                d += dx * dx + dy * dy;
            }
            acc += 0.5 * symmetric_weight(weights, m, n) * d;
        }
    return acc;
}

double objective_value(std::span<const System> systems, const PulseSequence& seq,
                       const WeightMatrix& weights, Objective objective) {
    const auto f = simulate_all(systems, seq);
    return objective == Objective::kTracking ? tracking_objective(f, weights)
                                             : figure_of_merit(f, weights);
}

double ObjectiveGradient::gradient_norm() const {
    double acc = 0.0;
    for (const auto& p : gradient) acc += p.theta_x * p.theta_x + p.theta_y * p.theta_y;
    return std::sqrt(acc);
}

ObjectiveGradient objective_gradient(std::span<const System> systems, const PulseSequence& seq,
                                     const WeightMatrix& weights, Objective objective,
                                     int threads) {
    if (systems.size() < 2) throw InvalidInput("objective needs at least two systems");
    if (weights.size() != systems.size()) throw DimensionError("weight matrix size differs from system count");
    if (seq.pulses.empty()) throw InvalidInput("pulse sequence is empty");
    seq.validate();

    const auto f = simulate_all(systems, seq);
    ObjectiveGradient out;
    out.value = objective == Objective::kTracking ? tracking_objective(f, weights)
                                                  : figure_of_merit(f, weights);
    const auto lambda = signal_adjoints(f, weights, objective);

    std::vector<std::vector<Pulse>> partial(systems.size(), std::vector<Pulse>(seq.count()));
    parallel_for(systems.size(), threads,
                 [&](std::size_t j) { backpropagate(systems[j], seq, lambda[j], partial[j]); });

    out.gradient.assign(seq.count(), Pulse{});
    for (const auto& p : partial)
        for (std::size_t k = 0; k < p.size(); ++k) {
            out.gradient[k].theta_x += p[k].theta_x;
            out.gradient[k].theta_y += p[k].theta_y;
        }
    return out;
}

void OptimizerConfig::validate() const {
    if (max_iterations < 1) throw InvalidInput("max_iterations must be >= 1");
    if (!(step_size > 0.0)) throw InvalidInput("step_size must be > 0");
    if (!(backtrack > 0.0 && backtrack < 1.0)) throw InvalidInput("backtrack factor must be in (0, 1)");
    if (!(growth >= 1.0)) throw InvalidInput("growth factor must be >= 1");
    if (multi_starts < 1) throw InvalidInput("multi_starts must be >= 1");
    if (clip && !(*clip > 0.0)) throw InvalidInput("clip bound must be > 0");
}

OptimizationResult optimize_field(std::span<const System> systems, const PulseSequence& initial,
                                  const OptimizerConfig& config, const WeightMatrix& weights) {
    config.validate();
    initial.validate();
    const auto t0 = std::chrono::steady_clock::now();

    auto masked = [&](ObjectiveGradient g) {
        if (config.axes == ControlAxes::kX)
            for (auto& p : g.gradient) p.theta_y = 0.0;
        return g;
    };

    OptimizationResult result;
    result.field = initial;
    auto current = masked(objective_gradient(systems, result.field, weights, config.objective, config.threads));
    auto& trace = result.trace;
    trace.values.push_back(current.value);
    trace.grad_norms.push_back(current.gradient_norm());
    trace.steps.push_back(0.0);

    double eps = 0.0;
    for (int it = 0; it < config.max_iterations; ++it) {
        const double gmax = max_abs(current.gradient);
        if (current.gradient_norm() <= config.gradient_tolerance) {
            trace.converged = true;
            trace.stop_reason = "gradient tolerance reached";
            break;
        }
        if (eps == 0.0) eps = config.step_size / gmax;

        bool accepted = false;
        while (eps * gmax > 1e-13) {
            auto trial = step_field(result.field, current.gradient, eps, config);
            const double value = objective_value(systems, trial, weights, config.objective);
            if (value > current.value) {
                trace.steps.push_back(step_length(trial, result.field));
                result.field = std::move(trial);
                accepted = true;
                break;
            }
            eps *= config.backtrack;
        }
        if (!accepted) {
            trace.converged = true;
            trace.stop_reason = "no ascent step found";
            break;
        }
        current = masked(objective_gradient(systems, result.field, weights, config.objective, config.threads));
        trace.values.push_back(current.value);
        trace.grad_norms.push_back(current.gradient_norm());
        eps *= config.growth;
    }
    if (trace.stop_reason.empty()) trace.stop_reason = "max iterations";
    trace.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

OptimizationResult optimize_multistart(std::span<const System> systems, std::size_t n_pulses,
                                       double delay_t, const OptimizerConfig& config,
                                       const WeightMatrix& weights) {
    config.validate();
    std::vector<OptimizationResult> runs(static_cast<std::size_t>(config.multi_starts));
    auto single = config;
    single.threads = 1;
    parallel_for(runs.size(), config.threads, [&](std::size_t s) {
        const auto seed = derive_seed(config.seed, s);
        runs[s] = optimize_field(systems, random_field(n_pulses, delay_t, config.init_amplitude, seed, config.axes),
                                 single, weights);
        runs[s].seed = seed;
        runs[s].start_index = static_cast<int>(s);
    });
    std::size_t best = 0;
    for (std::size_t s = 1; s < runs.size(); ++s)
        if (runs[s].final_value() > runs[best].final_value()) best = s;
    return std::move(runs[best]);
}

PulseSequence random_field(std::size_t n_pulses, double delay_t, double amplitude_bound,
                           std::uint64_t seed, ControlAxes axes) {
    if (!(amplitude_bound > 0.0)) throw InvalidInput("amplitude_bound must be > 0");
    std::mt19937_64 rng(seed);
    PulseSequence seq;
    seq.delay_t = delay_t;
    seq.pulses.resize(n_pulses);
    for (auto& p : seq.pulses) {
        p.theta_x = amplitude_bound * (2.0 * uniform01(rng) - 1.0);
        const double y = amplitude_bound * (2.0 * uniform01(rng) - 1.0);
        p.theta_y = axes == ControlAxes::kXY ? y : 0.0;
    }
    seq.validate();
    return seq;
}

}  // namespace ofp
