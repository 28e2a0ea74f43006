#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ofp/ensemble.hpp"
#include "ofp/error.hpp"
#include "ofp/fingerprint.hpp"
#include "ofp/grape.hpp"
#include "ofp/hash.hpp"
#include "support/generators.hpp"

using namespace ofp;
using ofp::testing::Gen;

namespace {

Trajectory traj(std::initializer_list<Sample> s) { return Trajectory{std::vector<Sample>(s)}; }

Trajectory scaled(const Trajectory& t, double c) {
    Trajectory out = t;
    for (auto& s : out.samples) {
        s.mx *= c;
        s.my *= c;
    }
    return out;
}

// Vertices of a regular simplex with N vertices: e_i minus the centroid of the
// standard basis, laid out two components per sample.
std::vector<Trajectory> simplex(std::size_t n, std::size_t samples, double scale_seed) {
    std::vector<Trajectory> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v(2 * samples, 0.0);
        for (std::size_t j = 0; j < n; ++j) v[j] = (i == j ? 1.0 : 0.0) - 1.0 / static_cast<double>(n);
        Trajectory t;
        for (std::size_t k = 0; k < samples; ++k) t.samples.push_back({v[2 * k], v[2 * k + 1]});
        // positive rescaling must not matter
        out.push_back(scaled(t, 0.5 + scale_seed * static_cast<double>(i + 1)));
    }
    return out;
}

}  // namespace

TEST_CASE("inner product") {
    CHECK(inner_product(traj({{1, 0}}), traj({{0, 1}})) == 0.0);
    CHECK(inner_product(traj({{1, 0}, {0, 1}}), traj({{2, 0}, {0, 3}})) == 5.0);
    CHECK(norm(traj({{3, 4}})) == 5.0);
    CHECK_THROWS_AS(inner_product(traj({{1, 0}}), traj({{1, 0}, {0, 1}})), DimensionError);
    Gen gen(21);
    const auto f = gen.trajectory(30);
    CHECK(inner_product(f, f) > 0.0);
    CHECK(inner_product(f, f) == doctest::Approx(norm(f) * norm(f)));
}

TEST_CASE("distance properties") {
    const auto f = traj({{1, 2}, {-1, 0.5}});
    CHECK(distance(f, f) == 0.0);
    CHECK(distance(f, scaled(f, -1.0)) == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(distance(f, scaled(f, 7.5)) < 1e-15);
    CHECK_THROWS_AS(distance(f, traj({{0, 0}, {0, 0}})), DegenerateSignal);

    Gen gen(22);
    for (int i = 0; i < 500; ++i) {
        const auto n = static_cast<std::size_t>(gen.integer(1, 40));
        const auto a = gen.trajectory(n);
        const auto b = gen.trajectory(n);
        const double d = distance(a, b);
        CHECK(d >= 0.0);
        CHECK(d <= 4.0);
        CHECK(d == doctest::Approx(distance(b, a)).epsilon(1e-14));
        CHECK(std::abs(d - distance(scaled(a, gen.uniform(0.01, 100)), b)) < 1e-12);
        // depends only on the angle between the signals
        const double cosine = inner_product(a, b) / (norm(a) * norm(b));
        CHECK(std::abs(d - 2.0 * (1.0 - cosine)) < 1e-12);
    }
}

TEST_CASE("figure of merit bound") {
    Gen gen(23);
    for (int i = 0; i < 300; ++i) {
        const auto n = static_cast<std::size_t>(gen.integer(1, 8));
        const auto len = static_cast<std::size_t>(gen.integer(1, 10));
        std::vector<Trajectory> set;
        for (std::size_t j = 0; j < n; ++j) set.push_back(gen.trajectory(len));
        const double c = figure_of_merit(set, WeightMatrix::ones(n));
        CHECK(c >= 0.0);
        CHECK(c <= 1.0 + 1e-12);

        // sum_{n,k} |u_n - u_k|^2 = 2 N^2 - 2 |sum_n u_n|^2 on normalized signals
        double lhs = 0.0;
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b) lhs += distance(set[a], set[b]);
        Trajectory sum;
        sum.samples.assign(len, {});
        for (const auto& t : set) {
            const double nt = norm(t);
            for (std::size_t k = 0; k < len; ++k) {
                sum.samples[k].mx += t.samples[k].mx / nt;
                sum.samples[k].my += t.samples[k].my / nt;
            }
        }
        const double nn = static_cast<double>(n);
        CHECK(std::abs(lhs - (2 * nn * nn - 2 * inner_product(sum, sum))) < 1e-10);
    }
}

TEST_CASE("regular simplexes attain the bound") {
    for (std::size_t n : {2u, 3u, 4u}) {
        const auto set = simplex(n, 3, 0.37);
        CHECK(std::abs(figure_of_merit(set, WeightMatrix::ones(n)) - 1.0) < 1e-10);
    }
    const auto f = traj({{1, 0}});
    const std::vector<Trajectory> antipodal{f, scaled(f, -2.0)};
    CHECK(figure_of_merit(antipodal, WeightMatrix::ones(2)) == doctest::Approx(1.0));
    const double a = 2 * std::numbers::pi / 3;
    const std::vector<Trajectory> triangle{traj({{1, 0}}), traj({{std::cos(a), std::sin(a)}}),
                                           traj({{std::cos(2 * a), std::sin(2 * a)}})};
    CHECK(figure_of_merit(triangle, WeightMatrix::ones(3)) == doctest::Approx(1.0).epsilon(1e-14));
    const std::vector<Trajectory> same{f, f, f};
    CHECK(figure_of_merit(same, WeightMatrix::ones(3)) == 0.0);
}

TEST_CASE("figure of merit is symmetric in entry order") {
    Gen gen(24);
    std::vector<Trajectory> set;
    for (int j = 0; j < 6; ++j) set.push_back(gen.trajectory(12));
    const double c = figure_of_merit(set, WeightMatrix::ones(6));
    std::vector<std::size_t> idx(6);
    std::iota(idx.begin(), idx.end(), 0);
    for (int p = 0; p < 20; ++p) {
        std::shuffle(idx.begin(), idx.end(), gen.engine());
        std::vector<Trajectory> perm;
        for (auto i : idx) perm.push_back(set[i]);
        CHECK(figure_of_merit(perm, WeightMatrix::ones(6)) == doctest::Approx(c).epsilon(1e-14));
    }
}

TEST_CASE("weight matrix") {
    WeightMatrix w(3, 1.0);
    w.set(0, 2, 0.25);
    CHECK(w(2, 0) == 0.25);
    CHECK_NOTHROW(w.validate());
    CHECK_THROWS_AS(w.set(3, 0, 1.0), DimensionError);
    WeightMatrix bad(2, -1.0);
    CHECK_THROWS_AS(bad.validate(), InvalidInput);

    // zero weight removes a pair from C_N
    const std::vector<Trajectory> set{traj({{1, 0}}), traj({{0, 1}}), traj({{-1, 0}})};
    WeightMatrix only(3, 0.0);
    only.set(0, 2, 1.0);
    CHECK(figure_of_merit(set, only) == doctest::Approx(2.0 * 4.0 / 18.0));
}

TEST_CASE("parameter points and grids") {
    ParameterPoint p{{"t1_s", 0.3}};
    p.set(param::kT2, 0.1);
    CHECK(p.get("t2_s") == 0.1);
    CHECK(p.size() == 2);
    CHECK_FALSE(p.contains("fwhm_rad_per_s"));
    CHECK_THROWS_AS(p.set("t3_s", 1.0), InvalidInput);
    CHECK_THROWS_AS((void)p.get("rf_scale"), InvalidInput);
    CHECK_THROWS_AS((ParameterPoint{{"t1_s", -1.0}}.validate()), InvalidInput);

    const std::vector<std::pair<std::string, std::vector<double>>> axes{{"t1_s", {0.1, 0.2}},
                                                                         {"t2_s", {0.01, 0.02, 0.03}}};
    const auto grid = parameter_grid(axes);
    REQUIRE(grid.size() == 6);
    CHECK(grid[0].get("t1_s") == 0.1);
    CHECK(grid[2].get("t2_s") == 0.03);
    CHECK(grid[3].get("t1_s") == 0.2);

    EnsembleSpec base;
    const auto applied = apply_parameters(base, ParameterPoint{{"fwhm_rad_per_s", 20.0}, {"t1_s", 0.5}});
    CHECK(applied.fwhm == 20.0);
    CHECK(applied.relaxation.t1 == 0.5);
    CHECK(parameter_value(applied, param::kFwhm) == 20.0);
    CHECK(make_ensemble(base).isochromats.size() == 1);
    CHECK(make_ensemble(applied).isochromats.size() == 101);
}

TEST_CASE("dictionary construction and recognition") {
    Gen gen(25);
    EnsembleSpec spec;
    spec.relaxation = {1.0, 0.2};
    std::vector<ParameterPoint> points;
    for (double t1 : {0.1, 0.233, 0.366, 0.5}) points.push_back({{"t1_s", t1}});
    const auto field = gen.field(100, 0.01, std::numbers::pi);
    const auto dict = build_dictionary(spec, points, field);
    CHECK_NOTHROW(dict.validate());
    CHECK(dict.field_hash == hash_sequence(field));
    CHECK(build_dictionary(spec, points, field, 3) == dict);

    for (std::size_t n = 0; n < dict.size(); ++n) {
        const auto m = recognize(dict, dict.entries[n].trajectory);
        CHECK(m.index == n);
        CHECK(m.residual < 1e-15);
        CHECK_FALSE(m.tie);
        const auto m5 = recognize(dict, scaled(dict.entries[n].trajectory, 5.0));
        CHECK(m5.index == n);
        CHECK(m5.residual < 1e-14);
    }

    const auto map = recognition_map(dict);
    REQUIRE(map.n == 4);
    double min_off = 4.0;
    for (std::size_t m = 0; m < 4; ++m) {
        CHECK(map(m, m) == 0.0);
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(map(m, k) == map(k, m));
            CHECK(map(m, k) <= 4.0);
            if (m != k) min_off = std::min(min_off, map(m, k));
        }
    }
    CHECK(map.min_off_diagonal == min_off);
    CHECK(recognition_map(dict, 2).values == map.values);

    auto stale = dict;
    stale.field.pulses[0].theta_x += 1e-9;
    CHECK_THROWS_AS(stale.validate(), InvalidInput);
    auto dup = dict;
    dup.entries[1].parameters = dup.entries[0].parameters;
    CHECK_THROWS_AS(dup.validate(), InvalidInput);
    CHECK_THROWS_AS(recognize(dict, Trajectory{std::vector<Sample>(100)}), DegenerateSignal);
}

TEST_CASE("recognition ties keep the lowest index") {
    Dictionary dict;
    dict.field = PulseSequence{{{0.1, 0.0}}, 0.01};
    dict.entries = {{{{"t1_s", 0.1}}, traj({{1, 0}})}, {{{"t1_s", 0.2}}, traj({{0, 1}})}};
    dict.field_hash = hash_sequence(dict.field);
    dict.ensemble_hash = hash_ensemble_spec(dict.ensemble);
    const auto m = recognize(dict, traj({{1, 1}}));
    CHECK(m.index == 0);
    CHECK(m.tie);
    CHECK(recognize(dict, traj({{1, 0.9}})).tie == false);

    Dictionary single = dict;
    single.entries.resize(1);
    const auto map = recognition_map(single);
    CHECK(map.n == 1);
    CHECK(map.values == std::vector<double>{0.0});
    CHECK(map.min_off_diagonal == 0.0);
}

TEST_CASE("recognize returns the entry itself for well separated dictionaries") {
    Gen gen(26);
    for (int i = 0; i < 50; ++i) {
        const auto n = static_cast<std::size_t>(gen.integer(2, 8));
        Dictionary dict;
        dict.field = gen.field(6, 0.01, 1.0);
        for (std::size_t j = 0; j < n; ++j)
            dict.entries.push_back({{{"t1_s", 0.1 + 0.1 * static_cast<double>(j)}}, gen.trajectory(6)});
        dict.field_hash = hash_sequence(dict.field);
        dict.ensemble_hash = hash_ensemble_spec(dict.ensemble);
        if (recognition_map(dict).min_off_diagonal <= 1e-9) continue;
        for (std::size_t j = 0; j < n; ++j) CHECK(recognize(dict, dict.entries[j].trajectory).index == j);
    }
}
