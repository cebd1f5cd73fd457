// Serial reference path vs the OpenMP kernels and the tree scheduler, with
// the refactorizing oracle for scale. Counters report loadflows per second.
#include <benchmark/benchmark.h>

#include <memory>

#include "batchdc/batch_solver.hpp"
#include "batchdc/oracle.hpp"
#include "batchdc/split_tree.hpp"
#include "batchdc/task_gen.hpp"

using namespace batchdc;

namespace {

const PreparedGrid& prepared() {
  static const auto grid = std::make_unique<PreparedGrid>(load_native(BATCHDC_DATA_DIR "/case300.json"));
  return *grid;
}

std::vector<TopologyTask> tasks(std::size_t count, std::size_t ti) {
  return generate_tasks(prepared().grid(), {count, 3, ti, 0, 1});
}

void report(benchmark::State& state, const std::vector<SolveResult>& results, std::span<const TopologyTask> batch) {
  std::size_t flows = 0;
  for (std::size_t k = 0; k < batch.size(); ++k) flows += counted_loadflows(results[k], batch[k], prepared().grid());
  state.counters["loadflows/s"] =
      benchmark::Counter(static_cast<double>(flows) * static_cast<double>(state.iterations()), benchmark::Counter::kIsRate);
}

void BM_FlatSerial(benchmark::State& state) {
  const auto batch = tasks(16, static_cast<std::size_t>(state.range(0)));
  SolveConfig config;
  config.workers = 1;
  std::vector<SolveResult> results;
  for (auto _ : state) benchmark::DoNotOptimize(results = solve_batch(prepared(), batch, config));
  report(state, results, batch);
}

void BM_FlatOpenMP(benchmark::State& state) {
  const auto batch = tasks(16, static_cast<std::size_t>(state.range(0)));
  SolveConfig config;
  config.workers = 0;
  std::vector<SolveResult> results;
  for (auto _ : state) benchmark::DoNotOptimize(results = solve_batch(prepared(), batch, config));
  report(state, results, batch);
}

void BM_Tree(benchmark::State& state) {
  const auto batch = tasks(16, static_cast<std::size_t>(state.range(0)));
  const auto tree = build_tree(batch);
  SolveConfig config;
  TreeOptions options;
  options.parallel_subtrees = true;
  std::vector<SolveResult> results;
  for (auto _ : state) benchmark::DoNotOptimize(results = execute_tree(prepared(), tree, batch, config, nullptr, options));
  report(state, results, batch);
}

void BM_Oracle(benchmark::State& state) {
  const auto batch = tasks(1, 1);
  const auto& g = prepared().grid();
  std::size_t flows = 0;
  for (auto _ : state) {
    const auto out = oracle_solve(materialize(g, batch[0], batch[0].injection_sets[0]));
    flows = 1 + g.contingencies().size() - out.islanding.size();
    benchmark::DoNotOptimize(out.n0.data());
  }
  state.counters["loadflows/s"] =
      benchmark::Counter(static_cast<double>(flows) * static_cast<double>(state.iterations()), benchmark::Counter::kIsRate);
}

void BM_BranchStage(benchmark::State& state) {
  const auto batch = tasks(8, 1);
  SolveConfig config;
  PtdfMatrix workspace;
  std::size_t k = 0;
  for (auto _ : state) {
    auto ctx = branch_stage(prepared(), batch[k++ % batch.size()], config, workspace);
    benchmark::DoNotOptimize(ctx.lodf.data());
  }
}

void BM_Bsdf(benchmark::State& state) {
  const auto batch = tasks(8, 1);
  std::size_t k = 0;
  for (auto _ : state) {
    const auto& split = batch[k++ % batch.size()].splits.front();
    auto update = compute_bsdf(prepared().base(), prepared().grid(), split.substation, split.branch_assignment);
    benchmark::DoNotOptimize(update.bsdf.data());
  }
}

}  // namespace

BENCHMARK(BM_FlatSerial)->Arg(1)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FlatOpenMP)->Arg(1)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Tree)->Arg(1)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Oracle)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BranchStage)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Bsdf)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
