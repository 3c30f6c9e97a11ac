// Parallel kernels against their single-threaded references.

#include <benchmark/benchmark.h>

#include <random>

#include "marvin/nav.hpp"
#include "marvin/worldsim.hpp"

using namespace marvin;

namespace {

const OccupancyGrid& home() {
  static const auto grid = sim::load_world(MARVIN_DATA_DIR "/worlds/home.world");
  return grid;
}

const kin::Pose2D kPose{2.6, 2.4, 0.3};

sim::LidarSpec spec_for(const benchmark::State& state) {
  sim::LidarSpec spec;
  spec.beams = static_cast<int>(state.range(0));
  return spec;
}

// Square map with scattered obstacles; side in cells.
nav::Costmap random_costmap(int side) {
  nav::Costmap m;
  m.geometry = GridGeometry{side, side, 0.05, {0, 0, 0}};
  m.cost.assign(m.geometry.size(), 0);
  std::mt19937_64 rng(5);
  std::bernoulli_distribution obstacle(0.02);
  for (auto& c : m.cost) c = obstacle(rng) ? nav::kLethal : 0;
  return m;
}

void BM_raycast(benchmark::State& state) {
  const auto spec = spec_for(state);
  for (auto _ : state) benchmark::DoNotOptimize(sim::raycast_lidar(home(), {}, kPose, spec));
}

void BM_raycast_serial(benchmark::State& state) {
  const auto spec = spec_for(state);
  for (auto _ : state) benchmark::DoNotOptimize(sim::raycast_lidar_serial(home(), {}, kPose, spec));
}

void BM_inflate(benchmark::State& state) {
  const auto base = random_costmap(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto m = base;
    nav::inflate(m);
    benchmark::DoNotOptimize(m.cost.data());
  }
}

void BM_inflate_serial(benchmark::State& state) {
  const auto base = random_costmap(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto m = base;
    nav::inflate_serial(m);
    benchmark::DoNotOptimize(m.cost.data());
  }
}

void BM_trace_scan(benchmark::State& state) {
  const auto scan = sim::raycast_lidar_serial(home(), {}, kPose, spec_for(state));
  for (auto _ : state) benchmark::DoNotOptimize(nav::trace_scan(home().geometry, scan));
}

void BM_trace_scan_serial(benchmark::State& state) {
  const auto scan = sim::raycast_lidar_serial(home(), {}, kPose, spec_for(state));
  for (auto _ : state) benchmark::DoNotOptimize(nav::trace_scan_serial(home().geometry, scan));
}

}  // namespace

BENCHMARK(BM_raycast)->Arg(360)->Arg(3600);
BENCHMARK(BM_raycast_serial)->Arg(360)->Arg(3600);
BENCHMARK(BM_inflate)->Arg(160)->Arg(640);
BENCHMARK(BM_inflate_serial)->Arg(160)->Arg(640);
BENCHMARK(BM_trace_scan)->Arg(360)->Arg(3600);
BENCHMARK(BM_trace_scan_serial)->Arg(360)->Arg(3600);

BENCHMARK_MAIN();
