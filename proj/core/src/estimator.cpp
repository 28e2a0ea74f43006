#include "ofp/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "ofp/error.hpp"
#include "ofp/parallel.hpp"

namespace ofp {

namespace {

// Armijo sufficient-decrease fraction and step growth after an accepted step.
constexpr double kArmijo = 0.5;
constexpr double kGrowth = 1.2;
constexpr double kBacktrack = 0.5;
// Largest scaled change proposed by the very first descent step.
constexpr double kFirstStep = 0.1;

double scale_floor(std::string_view name) { return name == param::kCenter ? 1.0 : 1e-3; }

// Free-parameter view of a fit problem, in coordinates scaled by the start point.
class FitProblem {
public:
    FitProblem(const Trajectory& g, const PulseSequence& seq, const EnsembleSpec& ensemble,
               const ParameterPoint& start, const FitConfig& config)
        : g_(g), seq_(seq), ensemble_(ensemble), start_(start), names_(config.free_parameters) {
        for (const auto& name : names_) {
            const auto& info = parameter_info(name);
            const double x0 = start.find(name).value_or(parameter_value(ensemble, name));
            if (!(std::isfinite(x0) && x0 >= info.lower && x0 <= info.upper))
                throw InvalidInput("start value of '" + name + "' outside admissible range");
            x0_.push_back(x0);
            scale_.push_back(std::max(std::abs(x0), scale_floor(name)));
            lower_.push_back(info.lower);
            upper_.push_back(info.upper);
        }
        // The coupling t2 <= 2 t1 matters only when one side is free.
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i] == param::kT1) t1_index_ = i;
            if (names_[i] == param::kT2) t2_index_ = i;
        }
    }

    [[nodiscard]] std::size_t dim() const { return names_.size(); }
    [[nodiscard]] Eigen::VectorXd start_scaled() const { return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dim())); }

    [[nodiscard]] ParameterPoint point(const Eigen::VectorXd& u) const {
        ParameterPoint p = start_;
        for (std::size_t i = 0; i < dim(); ++i) p.set(names_[i], physical(u, i));
        return p;
    }

    [[nodiscard]] double physical(const Eigen::VectorXd& u, std::size_t i) const {
        return u[static_cast<Eigen::Index>(i)] * scale_[i];
    }

    [[nodiscard]] Eigen::VectorXd project(Eigen::VectorXd u) const {
        for (std::size_t i = 0; i < dim(); ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            u[k] = std::clamp(u[k] * scale_[i], lower_[i], upper_[i]) / scale_[i];
        }
        const double t1 = t1_index_ ? physical(u, *t1_index_) : current_value(ensemble_, param::kT1, start_);
        const double t2 = t2_index_ ? physical(u, *t2_index_) : current_value(ensemble_, param::kT2, start_);
        if (t2 > 2.0 * t1) {
            if (t2_index_) u[static_cast<Eigen::Index>(*t2_index_)] = 2.0 * t1 / scale_[*t2_index_];
            else if (t1_index_) u[static_cast<Eigen::Index>(*t1_index_)] = 0.5 * t2 / scale_[*t1_index_];
        }
        return u;
    }

    [[nodiscard]] bool feasible(const Eigen::VectorXd& u) const { return project(u) == u; }

    [[nodiscard]] Trajectory simulate(const Eigen::VectorXd& u) const {
        const auto p = point(u);
        auto traj = simulate_fingerprint(make_ensemble(apply_parameters(ensemble_, p)), seq_);
        if (!(norm(traj) > 0.0))
            throw DegenerateSignal("simulated signal vanished at " + p.to_string());
        return traj;
    }

    [[nodiscard]] double residual(const Eigen::VectorXd& u) const { return distance(simulate(u), g_); }

    // Central differences in scaled coordinates; one-sided next to a bound.
    [[nodiscard]] Eigen::VectorXd gradient(const Eigen::VectorXd& u, double d0, double h) const {
        Eigen::VectorXd grad(u.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            Eigen::VectorXd up = u, dn = u;
            up[i] += h;
            dn[i] -= h;
            const bool fu = feasible(up), fd = feasible(dn);
            if (fu && fd) grad[i] = (residual(up) - residual(dn)) / (2.0 * h);
            else if (fu) grad[i] = (residual(up) - d0) / h;
            else if (fd) grad[i] = (d0 - residual(dn)) / h;
            else grad[i] = 0.0;
        }
        return grad;
    }

    // Columns of d(f/|f|)/du, stacked (mx, my) per sample.
    [[nodiscard]] Eigen::VectorXd normalized(const Trajectory& f) const {
        const double n = norm(f);
        Eigen::VectorXd v(static_cast<Eigen::Index>(2 * f.size()));
        for (std::size_t k = 0; k < f.size(); ++k) {
            v[static_cast<Eigen::Index>(2 * k)] = f.samples[k].mx / n;
            v[static_cast<Eigen::Index>(2 * k + 1)] = f.samples[k].my / n;
        }
        return v;
    }

    [[nodiscard]] Eigen::MatrixXd jacobian(const Eigen::VectorXd& u, const Eigen::VectorXd& r0, double h) const {
        Eigen::MatrixXd jac(r0.size(), u.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            Eigen::VectorXd up = u, dn = u;
            up[i] += h;
            dn[i] -= h;
            const bool fu = feasible(up), fd = feasible(dn);
            if (fu && fd) jac.col(i) = (normalized(simulate(up)) - normalized(simulate(dn))) / (2.0 * h);
            else if (fu) jac.col(i) = (normalized(simulate(up)) - r0) / h;
            else if (fd) jac.col(i) = (r0 - normalized(simulate(dn))) / h;
            else jac.col(i).setZero();
        }
        return jac;
    }

    [[nodiscard]] double relative_update(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
        double rel = 0.0;
        for (std::size_t i = 0; i < dim(); ++i) {
            const double xa = physical(a, i), xb = physical(b, i);
            rel = std::max(rel, std::abs(xa - xb) / std::max(std::abs(xb), scale_floor(names_[i])));
        }
        return rel;
    }

    [[nodiscard]] const Trajectory& target() const { return g_; }

private:
    static double current_value(const EnsembleSpec& e, std::string_view name, const ParameterPoint& start) {
        return start.find(name).value_or(parameter_value(e, name));
    }

    const Trajectory& g_;
    const PulseSequence& seq_;
    const EnsembleSpec& ensemble_;
    ParameterPoint start_;
    std::vector<std::string> names_;
    std::vector<double> x0_, scale_, lower_, upper_;
    std::optional<std::size_t> t1_index_, t2_index_;
};

void descend(const FitProblem& problem, const FitConfig& config, Eigen::VectorXd& u,
             EstimationReport& report) {
    double d = report.residual_history.back();
    double eta = 0.0;
    for (int it = 0; it < config.max_iterations; ++it) {
        const Eigen::VectorXd grad = problem.gradient(u, d, config.fd_step);
        const double gmax = grad.cwiseAbs().maxCoeff();
        if (gmax == 0.0) {
            report.converged = true;
            return;
        }
        if (eta == 0.0) eta = kFirstStep / gmax;

        bool accepted = false;
        Eigen::VectorXd trial;
        double d_trial = 0.0;
        while (eta * gmax > 1e-15) {
            trial = problem.project(u - eta * grad);
            d_trial = problem.residual(trial);
            if (d_trial <= d + kArmijo * grad.dot(trial - u) && d_trial < d) {
                accepted = true;
                break;
            }
            eta *= kBacktrack;
        }
        if (!accepted) {
            // No descent direction resolvable at this precision: a stationary point.
            report.converged = true;
            return;
        }
        const double rel = problem.relative_update(trial, u);
        u = trial;
        d = d_trial;
        report.residual_history.push_back(d);
        report.iterations = it + 1;
        if (rel < config.tolerance) {
            report.converged = true;
            return;
        }
        eta *= kGrowth;
    }
}

void levenberg_marquardt(const FitProblem& problem, const FitConfig& config, Eigen::VectorXd& u,
                         EstimationReport& report) {
    const Trajectory& g = problem.target();
    const double gn = norm(g);
    Eigen::VectorXd target(static_cast<Eigen::Index>(2 * g.size()));
    for (std::size_t k = 0; k < g.size(); ++k) {
        target[static_cast<Eigen::Index>(2 * k)] = g.samples[k].mx / gn;
        target[static_cast<Eigen::Index>(2 * k + 1)] = g.samples[k].my / gn;
    }
    double d = report.residual_history.back();
    double lambda = 1e-3;
    for (int it = 0; it < config.max_iterations; ++it) {
        const Eigen::VectorXd f = problem.normalized(problem.simulate(u));
        const Eigen::VectorXd r = f - target;
        const Eigen::MatrixXd jac = problem.jacobian(u, f, config.fd_step);
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * r;
        if (jtr.cwiseAbs().maxCoeff() == 0.0) {
            report.converged = true;
            return;
        }
        bool accepted = false;
        Eigen::VectorXd trial;
        double d_trial = 0.0;
        while (lambda < 1e12) {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            trial = problem.project(u - a.ldlt().solve(jtr));
            d_trial = problem.residual(trial);
            if (d_trial < d) {
                accepted = true;
                lambda = std::max(lambda / 3.0, 1e-12);
                break;
            }
            lambda *= 4.0;
        }
        if (!accepted) {
            report.converged = true;
            return;
        }
        const double rel = problem.relative_update(trial, u);
        u = trial;
        d = d_trial;
        report.residual_history.push_back(d);
        report.iterations = it + 1;
        if (rel < config.tolerance) {
            report.converged = true;
            return;
        }
    }
}

}  // namespace

void FitConfig::validate() const {
    if (free_parameters.empty()) throw InvalidInput("no free parameters");
    for (std::size_t i = 0; i < free_parameters.size(); ++i) {
        parameter_info(free_parameters[i]);
        for (std::size_t j = 0; j < i; ++j)
            if (free_parameters[i] == free_parameters[j])
                throw InvalidInput("duplicate free parameter '" + free_parameters[i] + "'");
    }
    if (!(fd_step > 0.0 && fd_step < 1.0)) throw InvalidInput("fd_step must be in (0, 1)");
    if (max_iterations < 0) throw InvalidInput("max_iterations must be >= 0");
    if (!(tolerance > 0.0)) throw InvalidInput("tolerance must be > 0");
}

EstimationReport fit_parameters(const Trajectory& g, const PulseSequence& seq,
                                const EnsembleSpec& ensemble, const ParameterPoint& start,
                                const FitConfig& config) {
    config.validate();
    if (g.size() != seq.count())
        throw DimensionError("signal length " + std::to_string(g.size()) + " differs from pulse count " +
                             std::to_string(seq.count()));
    if (!(norm(g) > 0.0)) throw DegenerateSignal("measured signal has zero norm");

    const FitProblem problem(g, seq, ensemble, start, config);
    Eigen::VectorXd u = problem.start_scaled();

    EstimationReport report;
    report.matched_parameters = problem.point(u);
    report.matched_residual = problem.residual(u);
    report.residual_history.push_back(report.matched_residual);
    if (report.matched_residual == 0.0) {
        report.converged = true;
    } else if (config.strategy == FitStrategy::kLevenbergMarquardt) {
        levenberg_marquardt(problem, config, u, report);
    } else {
        descend(problem, config, u, report);
    }
    report.refined_parameters = problem.point(u);
    report.final_residual = report.residual_history.back();
    return report;
}

EstimationReport estimate(const Dictionary& dict, const Trajectory& g, const FitConfig& config) {
    if (!dict.entries.empty() && g.size() != dict.entries.front().trajectory.size())
        throw DimensionError("signal length differs from dictionary trajectories");
    const auto match = recognize(dict, g);
    auto report = fit_parameters(g, dict.field, dict.ensemble, match.parameters, config);
    report.matched_index = match.index;
    report.matched_parameters = match.parameters;
    report.tie = match.tie;
    report.entry_residuals = match.residuals;
    return report;
}

std::vector<IrSample> inversion_recovery_signal(double t1, std::size_t n, double spacing) {
    if (!(t1 > 0.0)) throw InvalidInput("t1 must be > 0");
    std::vector<IrSample> out(n);
    for (std::size_t m = 0; m < n; ++m) {
        const double t = spacing * static_cast<double>(m);
        out[m] = {t, 1.0 - 2.0 * std::exp(-t / t1)};
    }
    return out;
}

IrEstimate ir_estimate(std::span<const IrSample> samples, const IrFitConfig& config) {
    if (samples.size() < 2) throw InvalidInput("inversion recovery needs at least two samples");
    for (const auto& s : samples)
        if (!std::isfinite(s.t) || !std::isfinite(s.value) || s.t < 0.0)
            throw InvalidInput("inversion recovery samples must be finite with t >= 0");

    constexpr double kLower = 1e-4, kUpper = 1e3;
    auto sse = [&](double t1) {
        double acc = 0.0;
        for (const auto& s : samples) {
            const double r = s.value - (1.0 - 2.0 * std::exp(-s.t / t1));
            acc += r * r;
        }
        return acc;
    };
    auto derivative = [&](double t1) {
        double acc = 0.0;
        for (const auto& s : samples) {
            const double e = std::exp(-s.t / t1);
            const double r = s.value - (1.0 - 2.0 * e);
            acc += 2.0 * r * (2.0 * s.t / (t1 * t1) * e);
        }
        return acc;
    };

    // Start from the first zero crossing, where exp(-t/T1) = 1/2.
    double t1 = 1.0;
    for (std::size_t m = 1; m < samples.size(); ++m) {
        const auto& a = samples[m - 1];
        const auto& b = samples[m];
        if (a.value < 0.0 && b.value >= 0.0) {
            const double tc = a.t + (b.t - a.t) * (-a.value) / (b.value - a.value);
            if (tc > 0.0) t1 = std::clamp(tc / std::log(2.0), kLower, kUpper);
            break;
        }
    }

    IrEstimate out;
    double f = sse(t1);
    double eta = 0.0;
    for (int it = 0; it < config.max_iterations; ++it) {
        const double g = derivative(t1);
        if (g == 0.0) {
            out.converged = true;
            break;
        }
        if (eta == 0.0) eta = kFirstStep * t1 / std::abs(g);
        bool accepted = false;
        double trial = t1, f_trial = f;
        while (eta * std::abs(g) > 1e-16 * t1) {
            trial = std::clamp(t1 - eta * g, kLower, kUpper);
            f_trial = sse(trial);
            if (f_trial <= f + kArmijo * g * (trial - t1) && f_trial < f) {
                accepted = true;
                break;
            }
            eta *= kBacktrack;
        }
        if (!accepted) {
            out.converged = true;
            break;
        }
        const double rel = std::abs(trial - t1) / t1;
        t1 = trial;
        f = f_trial;
        out.iterations = it + 1;
        if (rel < config.tolerance) {
            out.converged = true;
            break;
        }
        eta *= kGrowth;
    }
    out.t1 = t1;
    out.residual = f;
    return out;
}

double t2_star(double t2, double fwhm) {
    if (!(t2 > 0.0)) throw InvalidInput("t2 must be > 0");
    if (!(fwhm >= 0.0)) throw InvalidInput("fwhm must be >= 0");
    return 1.0 / (1.0 / t2 + 0.5 * fwhm);
}

std::vector<ScanRow> correlation_scan(const Trajectory& g, const PulseSequence& seq,
                                      const EnsembleSpec& ensemble, const ParameterPoint& start,
                                      std::span<const double> fwhm_grid, const FitConfig& config,
                                      int threads) {
    if (fwhm_grid.empty()) throw InvalidInput("fwhm grid is empty");
    for (const auto& name : config.free_parameters)
        if (name == param::kFwhm) throw InvalidInput("fwhm is scanned, it cannot also be free");

    std::vector<ScanRow> rows(fwhm_grid.size());
    parallel_for(fwhm_grid.size(), threads, [&](std::size_t i) {
        auto& row = rows[i];
        row.fwhm = fwhm_grid[i];
        try {
            EnsembleSpec spec = ensemble;
            spec.fwhm = fwhm_grid[i];
            ParameterPoint p = start;
            if (p.contains(param::kFwhm)) p.set(param::kFwhm, fwhm_grid[i]);
            const auto report = fit_parameters(g, seq, spec, p, config);
            const auto fitted = apply_parameters(spec, report.refined_parameters);
            row.t2 = fitted.relaxation.t2;
            row.center = fitted.center;
            row.residual = report.final_residual;
            row.t2_star = t2_star(row.t2, row.fwhm);
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.residual = std::numeric_limits<double>::quiet_NaN();
            row.error = e.what();
        }
    });
    return rows;
}

Plateau find_plateau(std::span<const ScanRow> rows, double rel_tolerance) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].ok && (!best || rows[i].residual < rows[*best].residual)) best = i;
    if (!best) throw ScenarioError("no successful scan point");
    const double limit = rows[*best].residual * (1.0 + rel_tolerance);
    Plateau p{*best, *best, *best};
    while (p.first > 0 && rows[p.first - 1].ok && rows[p.first - 1].residual <= limit) --p.first;
    while (p.last + 1 < rows.size() && rows[p.last + 1].ok && rows[p.last + 1].residual <= limit) ++p.last;
    return p;
}

}  // namespace ofp
