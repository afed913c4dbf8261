// Serial reference path vs OpenMP path for the two parallel kernels.

#include <benchmark/benchmark.h>

#include <vector>

#include "pwlsi/conditioning.hpp"
#include "pwlsi/detector.hpp"
#include "pwlsi/experiment.hpp"
#include "pwlsi/inference.hpp"
#include "pwlsi/vae.hpp"

using namespace pwlsi;

namespace {

// Untrained weights are enough for timing.
const PwlGraph& detector(int n) {
  static const PwlGraph g64 = assemble_detector(make_vae({1, 8, 8}, {}, 3), {});
  static const PwlGraph g256 = assemble_detector(make_vae({1, 16, 16}, {}, 3), {});
  return n == 64 ? g64 : g256;
}

void grid_scan_bench(benchmark::State& state, Execution ex) {
  const int n = static_cast<int>(state.range(0));
  const PwlGraph& g = detector(n);
  const CovMatrix sigma = CovMatrix::identity(n);
  const Image x = Image::from_flat(standard_normal(n, 5));
  const AnomalyRegion target = forward(g, x).region;
  const AffineLine line = init_line(x, build_eta(AnomalyRegion({0, 1, 2}, n), n), sigma);
  std::vector<double> grid(4096);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = -10.0 + 20.0 * static_cast<double>(i) / (grid.size() - 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(grid_scan(g, line, target, grid, ex));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(grid.size()));
}

void trials_bench(benchmark::State& state, Execution ex) {
  const int n = static_cast<int>(state.range(0));
  const PwlGraph& g = detector(n);
  const CovMatrix sigma = CovMatrix::identity(n);
  constexpr int kTrials = 16;
  for (auto _ : state)
    benchmark::DoNotOptimize(run_trials(
        g, sigma, kTrials, 1, [&](std::uint64_t s) { return make_synthetic(n, 0.0, 4, sigma, s).image; }, ex));
  state.SetItemsProcessed(state.iterations() * kTrials);
}

}  // namespace

BENCHMARK_CAPTURE(grid_scan_bench, serial, Execution::Serial)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(grid_scan_bench, parallel, Execution::Parallel)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(trials_bench, serial, Execution::Serial)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(trials_bench, parallel, Execution::Parallel)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
