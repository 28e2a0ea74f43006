#include "ofp/noise.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "ofp/error.hpp"
#include "ofp/parallel.hpp"
#include "ofp/random.hpp"

namespace ofp {

namespace {

double median(std::vector<double> v) {
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

}  // namespace

Trajectory add_noise(const Trajectory& g, const NoiseSpec& spec) {
    if (!(spec.epsilon >= 0.0)) throw InvalidInput("epsilon must be >= 0");
    if (spec.epsilon == 0.0) return g;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Trajectory out = g;
    for (auto& s : out.samples) {
        s.mx += spec.epsilon * normal(rng);
        s.my += spec.epsilon * normal(rng);
    }
    return out;
}

std::vector<IrSample> add_noise(std::span<const IrSample> g, const NoiseSpec& spec) {
    if (!(spec.epsilon >= 0.0)) throw InvalidInput("epsilon must be >= 0");
    std::vector<IrSample> out(g.begin(), g.end());
    if (spec.epsilon == 0.0) return out;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& s : out) s.value += spec.epsilon * normal(rng);
    return out;
}

double width_of(std::span<const double> estimates, WidthMethod method) {
    const auto n = estimates.size();
    if (n < 2) throw InvalidInput("width needs at least two estimates");
    if (method == WidthMethod::kMad) {
        std::vector<double> v(estimates.begin(), estimates.end());
        const double med = median(v);
        for (auto& x : v) x = std::abs(x - med);
        return 1.4826 * median(std::move(v));
    }
    // the rounded mean of equal values can miss them by an ulp
    const auto [lo, hi] = std::minmax_element(estimates.begin(), estimates.end());
    if (*lo == *hi) return 0.0;
    const double mean = std::accumulate(estimates.begin(), estimates.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double x : estimates) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

WidthReport width_study(const DrawFn& draw, std::span<const double> eps_grid,
                        const WidthOptions& options, std::string method) {
    if (options.draws < 2) throw InvalidInput("width study needs at least two draws");
    if (eps_grid.empty()) throw InvalidInput("epsilon grid is empty");

    const auto draws = static_cast<std::size_t>(options.draws);
    WidthReport report;
    report.method = std::move(method);
    for (std::size_t e = 0; e < eps_grid.size(); ++e) {
        const double eps = eps_grid[e];
        if (!(eps >= 0.0)) throw InvalidInput("epsilon must be >= 0");

        std::vector<DrawOutcome> outcomes(draws);
        std::vector<bool> cached(draws, false);
        if (options.cache) {
            for (std::size_t d = 0; d < draws; ++d) {
                if (auto hit = options.cache->lookup(e, d)) {
                    outcomes[d] = *hit;
                    cached[d] = true;
                }
            }
        }
        parallel_for(draws, options.threads, [&](std::size_t d) {
            if (cached[d]) return;
            try {
                const double x = draw(eps, derive_seed(options.master_seed, d));
                outcomes[d] = {x, std::isfinite(x)};
            } catch (const std::exception&) {
                outcomes[d] = {0.0, false};
            }
        });
        if (options.cache)
            for (std::size_t d = 0; d < draws; ++d)
                if (!cached[d]) options.cache->store(e, d, outcomes[d]);

        WidthRow row;
        row.epsilon = eps;
        row.draws = options.draws;
        for (const auto& o : outcomes) {
            if (o.ok) row.estimates.push_back(o.estimate);
            else ++row.failures;
        }
        if (static_cast<double>(row.estimates.size()) < options.min_success * static_cast<double>(draws) ||
            row.estimates.size() < 2)
            throw ScenarioError(report.method + ": only " + std::to_string(row.estimates.size()) + " of " +
                                std::to_string(draws) + " draws succeeded at epsilon " + std::to_string(eps));
        row.mean = std::accumulate(row.estimates.begin(), row.estimates.end(), 0.0) /
                   static_cast<double>(row.estimates.size());
        row.width = width_of(row.estimates, options.width);
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::vector<RatioRow> compare_methods(const WidthReport& a, const WidthReport& b) {
    if (a.rows.size() != b.rows.size()) throw DimensionError("width reports have different epsilon grids");
    std::vector<RatioRow> out;
    out.reserve(a.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        const auto& ra = a.rows[i];
        const auto& rb = b.rows[i];
        if (ra.epsilon != rb.epsilon) throw DimensionError("width reports have different epsilon grids");
        RatioRow row{ra.epsilon, std::nullopt, 0.0};
        if (rb.width > 0.0) {
            const double ratio = ra.width / rb.width;
            auto rel_se = [](const WidthRow& r) {
                const auto n = static_cast<double>(r.estimates.size());
                return 1.0 / std::sqrt(2.0 * (n - 1.0));
            };
            row.ratio = ratio;
            const double sa = ra.width > 0.0 ? rel_se(ra) : 0.0;
            row.std_error = ratio * std::sqrt(sa * sa + rel_se(rb) * rel_se(rb));
        }
        out.push_back(row);
    }
    return out;
}

DrawFn fingerprint_draw(Dictionary dict, Trajectory clean, FitConfig config, std::string parameter) {
    return [dict = std::make_shared<const Dictionary>(std::move(dict)), clean = std::move(clean), config = std::move(config),
            parameter = std::move(parameter)](double eps, std::uint64_t seed) {
        const auto g = add_noise(clean, {eps, seed});
        return estimate(*dict, g, config).refined_parameters.get(parameter);
    };
}

DrawFn inversion_recovery_draw(double t1, std::size_t n_points, double spacing, IrFitConfig config) {
    return [clean = inversion_recovery_signal(t1, n_points, spacing), config](double eps, std::uint64_t seed) {
        const auto g = add_noise(clean, {eps, seed});
        return ir_estimate(g, config).t1;
    };
}

}  // namespace ofp
