#include <doctest.h>

#include <atomic>
#include <cmath>
#include <map>
#include <numbers>

#include "ofp/error.hpp"
#include "ofp/grape.hpp"
#include "ofp/noise.hpp"
#include "ofp/random.hpp"
#include "support/generators.hpp"

using namespace ofp;

namespace {

class MemoryCache final : public DrawCache {
public:
    std::optional<DrawOutcome> lookup(std::size_t e, std::size_t d) override {
        auto it = store_.find({e, d});
        if (it == store_.end()) return std::nullopt;
        return it->second;
    }
    void store(std::size_t e, std::size_t d, const DrawOutcome& o) override { store_[{e, d}] = o; }
    std::map<std::pair<std::size_t, std::size_t>, DrawOutcome> store_;
};

const std::vector<double> kGrid{0.0, 1e-3, 1e-2, 5e-2};

}  // namespace

TEST_CASE("additive noise") {
    ofp::testing::Gen gen(51);
    const auto g = gen.trajectory(64);
    CHECK(add_noise(g, {0.0, 7}) == g);
    CHECK(add_noise(g, {0.1, 7}) == add_noise(g, {0.1, 7}));
    CHECK_FALSE(add_noise(g, {0.1, 7}) == add_noise(g, {0.1, 8}));
    CHECK_THROWS_AS(add_noise(g, {-0.1, 7}), InvalidInput);

    // one sample, many independent draws
    const Trajectory one{{Sample{0.2, -0.4}}};
    const double eps = 0.03;
    const int n = 100000;
    double sx = 0, sxx = 0, sy = 0, syy = 0;
    for (int d = 0; d < n; ++d) {
        const auto s = add_noise(one, {eps, derive_seed(99, static_cast<std::uint64_t>(d))}).samples[0];
        sx += s.mx;
        sxx += s.mx * s.mx;
        sy += s.my;
        syy += s.my * s.my;
    }
    const double mx = sx / n, my = sy / n;
    CHECK(std::abs(std::sqrt(sxx / n - mx * mx) - eps) / eps < 0.01);
    CHECK(std::abs(std::sqrt(syy / n - my * my) - eps) / eps < 0.01);
    CHECK(std::abs(mx - 0.2) < 4 * eps / std::sqrt(n));

    const auto ir = inversion_recovery_signal(0.3, 10, 0.01);
    const auto noisy = add_noise(ir, {0.05, 3});
    for (std::size_t i = 0; i < ir.size(); ++i) CHECK(noisy[i].t == ir[i].t);
}

TEST_CASE("sub-seeds are counter based") {
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    CHECK(derive_seed(5, 17) == derive_seed(5, 17));
}

TEST_CASE("width of a sample") {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    CHECK(width_of(v, WidthMethod::kStdDev) == doctest::Approx(std::sqrt(5.0 / 3.0)));
    const std::vector<double> w{1.0, 1.0, 2.0, 100.0, 1.5};
    CHECK(width_of(w, WidthMethod::kMad) == doctest::Approx(1.4826 * 0.5));
    CHECK(width_of(std::vector<double>{3.0, 3.0}, WidthMethod::kStdDev) == 0.0);
}

TEST_CASE("inversion recovery width study") {
    const auto draw = inversion_recovery_draw(0.3, 120, 0.01);
    WidthOptions opts;
    opts.draws = 30;
    opts.master_seed = 4;
    const auto r = width_study(draw, kGrid, opts, "ir");
    REQUIRE(r.rows.size() == kGrid.size());
    CHECK(r.method == "ir");
    CHECK(r.rows[0].width == 0.0);
    CHECK(r.rows[0].mean == doctest::Approx(0.3).epsilon(1e-6));
    for (std::size_t i = 1; i < r.rows.size(); ++i) {
        CHECK(r.rows[i].width > r.rows[i - 1].width);
        CHECK(r.rows[i].failures == 0);
        CHECK(r.rows[i].estimates.size() == 30);
        // unbiased estimator: mean within 3 standard errors of the truth
        CHECK(std::abs(r.rows[i].mean - 0.3) < 3 * r.rows[i].width / std::sqrt(30.0));
    }

    opts.threads = 3;
    const auto t = width_study(draw, kGrid, opts, "ir");
    for (std::size_t i = 0; i < r.rows.size(); ++i) CHECK(t.rows[i].estimates == r.rows[i].estimates);

    // adding draws never changes existing ones
    opts.draws = 45;
    const auto more = width_study(draw, kGrid, opts, "ir");
    for (std::size_t i = 0; i < r.rows.size(); ++i)
        for (std::size_t d = 0; d < 30; ++d) CHECK(more.rows[i].estimates[d] == r.rows[i].estimates[d]);
}

TEST_CASE("width estimates settle as draws grow") {
    const auto draw = inversion_recovery_draw(0.3, 120, 0.01);
    const std::vector<double> eps{0.05};
    WidthOptions opts;
    opts.master_seed = 12;
    std::vector<double> widths;
    for (int n : {30, 60, 120}) {
        opts.draws = n;
        widths.push_back(width_study(draw, eps, opts, "ir").rows[0].width);
    }
    for (std::size_t i = 1; i < widths.size(); ++i) {
        const double n = 30.0 * std::pow(2.0, static_cast<double>(i - 1));
        const double se = widths[i - 1] / std::sqrt(2.0 * (n - 1.0));
        CHECK(std::abs(widths[i] - widths[i - 1]) < 2.0 * se);
    }
}

TEST_CASE("failures are counted and bounded") {
    std::atomic<int> calls{0};
    const DrawFn flaky = [&](double eps, std::uint64_t seed) {
        ++calls;
        if (seed % 10 == 0) throw ScenarioError("no fit");
        if (seed % 10 == 1) return std::nan("");
        return 1.0 + eps * static_cast<double>(seed % 7);
    };
    WidthOptions opts;
    opts.draws = 40;
    opts.master_seed = 3;
    opts.min_success = 0.5;
    const auto r = width_study(flaky, std::vector<double>{0.1}, opts, "flaky");
    CHECK(r.rows[0].failures > 0);
    CHECK(r.rows[0].failures + static_cast<int>(r.rows[0].estimates.size()) == 40);
    CHECK(r.rows[0].draws == 40);

    const DrawFn broken = [](double, std::uint64_t seed) -> double {
        if (seed % 2) throw ScenarioError("no fit");
        return 1.0;
    };
    opts.min_success = 0.8;
    CHECK_THROWS_AS(width_study(broken, std::vector<double>{0.1}, opts, "broken"), ScenarioError);
    opts.draws = 1;
    CHECK_THROWS_AS(width_study(broken, std::vector<double>{0.1}, opts, "broken"), InvalidInput);
}

TEST_CASE("checkpoint cache is consulted before drawing") {
    std::atomic<int> calls{0};
    const DrawFn draw = [&](double eps, std::uint64_t seed) {
        ++calls;
        return 0.5 + eps * static_cast<double>(seed % 13);
    };
    MemoryCache cache;
    WidthOptions opts;
    opts.draws = 10;
    opts.cache = &cache;
    const auto a = width_study(draw, kGrid, opts, "m");
    CHECK(calls == 40);
    CHECK(cache.store_.size() == 40);
    const auto b = width_study(draw, kGrid, opts, "m");
    CHECK(calls == 40);
    for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].estimates == b.rows[i].estimates);

    // a partially filled cache resumes where it stopped
    cache.store_.erase({3, 9});
    cache.store_.erase({2, 0});
    const auto c = width_study(draw, kGrid, opts, "m");
    CHECK(calls == 42);
    for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].estimates == c.rows[i].estimates);
}

TEST_CASE("method comparison") {
    const auto draw = inversion_recovery_draw(0.3, 60, 0.01);
    WidthOptions opts;
    opts.draws = 20;
    const auto a = width_study(draw, kGrid, opts, "a");
    const auto rows = compare_methods(a, a);
    REQUIRE(rows.size() == kGrid.size());
    CHECK_FALSE(rows[0].ratio.has_value());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        REQUIRE(rows[i].ratio.has_value());
        CHECK(*rows[i].ratio == 1.0);
        // both widths carry se = w / sqrt(2 (n - 1))
        CHECK(rows[i].std_error == doctest::Approx(std::sqrt(2.0) / std::sqrt(2.0 * 19.0)));
    }
    const std::vector<double> other{0.0, 1e-3};
    const auto b = width_study(draw, other, opts, "b");
    CHECK_THROWS_AS(compare_methods(a, b), DimensionError);
}
