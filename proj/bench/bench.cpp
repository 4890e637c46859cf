// Serial reference against OpenMP kernels: ensemble rollout, conflict
// detection and lane spacing.

#include <benchmark/benchmark.h>

#include <random>

#include "../tests/support/fixtures.hpp"
#include "skylane/runner.hpp"

using namespace skylane;

namespace {

struct Traffic {
    Scenario sc = load_scenario(fixture::scenario_path("five_pairs"));
    Episode ep{sc};
    ResolverConfig cfg = resolver_config(sc);
    RolloutSet rollouts;

    Traffic() {
        ep.run_cycle();
        rollouts = simulate_ensemble(ep.ground_truth(), ep.lanes(), cfg.twin, cfg.ensemble);
    }
};

Traffic& traffic() {
    static Traffic t;
    return t;
}

void BM_EnsembleParallel(benchmark::State& state) {
    auto& t = traffic();
    for (auto _ : state)
        benchmark::DoNotOptimize(simulate_ensemble(t.ep.ground_truth(), t.ep.lanes(), t.cfg.twin, t.cfg.ensemble));
}

void BM_EnsembleSerial(benchmark::State& state) {
    auto& t = traffic();
    for (auto _ : state)
        benchmark::DoNotOptimize(simulate_ensemble_serial(t.ep.ground_truth(), t.ep.lanes(), t.cfg.twin, t.cfg.ensemble));
}

void BM_DetectParallel(benchmark::State& state) {
    auto& t = traffic();
    for (auto _ : state) benchmark::DoNotOptimize(detect(t.rollouts, t.cfg.minima));
}

void BM_DetectSerial(benchmark::State& state) {
    auto& t = traffic();
    for (auto _ : state) benchmark::DoNotOptimize(detect_serial(t.rollouts, t.cfg.minima));
}

LaneTriple long_lanes() {
    std::mt19937_64 rng(99);
    Route r = fixture::random_route(rng, "B");
    while (r.fixes.size() < 7) r = fixture::random_route(rng, "B");
    return build_lanes(r, 3.5);
}

void BM_LaneSpacingParallel(benchmark::State& state) {
    static const LaneTriple lanes = long_lanes();
    const double step = 1.0 / static_cast<double>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(min_lane_spacing(lanes.left, lanes.right, step));
}

void BM_LaneSpacingSerial(benchmark::State& state) {
    static const LaneTriple lanes = long_lanes();
    const double step = 1.0 / static_cast<double>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(min_lane_spacing_serial(lanes.left, lanes.right, step));
}

}  // namespace

BENCHMARK(BM_EnsembleParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EnsembleSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DetectParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DetectSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LaneSpacingParallel)->Arg(10)->Arg(100)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LaneSpacingSerial)->Arg(10)->Arg(100)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
