#include <benchmark/benchmark.h>

#include <numbers>
#include <vector>

#include "ofp/fingerprint.hpp"
#include "ofp/grape.hpp"

namespace {

ofp::EnsembleSpec lorentzian(int points) {
    ofp::EnsembleSpec e;
    e.relaxation = {0.087, 0.06};
    e.fwhm = 28.0;
    e.n_points = points;
    return e;
}

std::vector<ofp::ParameterPoint> t1_points(int n) {
    std::vector<ofp::ParameterPoint> pts;
    for (int i = 0; i < n; ++i) pts.push_back({{"t1_s", 0.1 + 0.4 * i / std::max(1, n - 1)}});
    return pts;
}

void BM_Simulate(benchmark::State& state) {
    const auto field = ofp::random_field(static_cast<std::size_t>(state.range(0)), 0.01, std::numbers::pi, 1);
    const auto ensemble = ofp::make_ensemble(lorentzian(static_cast<int>(state.range(1))));
    for (auto _ : state) benchmark::DoNotOptimize(ofp::simulate_fingerprint(ensemble, field));
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}
BENCHMARK(BM_Simulate)->Args({500, 1})->Args({500, 101})->Args({120, 101});

void BM_Gradient(benchmark::State& state) {
    const auto n = static_cast<int>(state.range(1));
    ofp::EnsembleSpec base;
    base.relaxation = {1.0, 0.2};
    const auto systems = ofp::make_systems(base, t1_points(n));
    const auto field = ofp::random_field(static_cast<std::size_t>(state.range(0)), 0.01, 0.3, 2);
    const auto w = ofp::WeightMatrix::ones(static_cast<std::size_t>(n));
    for (auto _ : state) benchmark::DoNotOptimize(ofp::objective_gradient(systems, field, w));
}
BENCHMARK(BM_Gradient)->Args({500, 4})->Args({500, 8})->Args({120, 4});

void BM_Recognition(benchmark::State& state) {
    ofp::EnsembleSpec base;
    base.relaxation = {1.0, 0.2};
    const auto field = ofp::random_field(500, 0.01, std::numbers::pi, 3);
    const auto dict = ofp::build_dictionary(base, t1_points(static_cast<int>(state.range(0))), field);
    const auto g = dict.entries[1].trajectory;
    for (auto _ : state) benchmark::DoNotOptimize(ofp::recognize(dict, g));
}
BENCHMARK(BM_Recognition)->Arg(4)->Arg(64)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
