// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>
#include <omp.h>

#include "rdx/localrand.hpp"
#include "rdx/simulate.hpp"

using namespace rdx;

namespace {

SimulationConfig mc_config(benchmark::State& state) {
  SimulationConfig cfg;
  cfg.N = static_cast<std::size_t>(state.range(0));
  cfg.reps = 16;
  cfg.seed = 3;
  return cfg;
}

void BM_MonteCarloSerial(benchmark::State& state) {
  const auto cfg = mc_config(state);
  for (auto _ : state) benchmark::DoNotOptimize(run_monte_carlo_serial(cfg).mean_tau_hat);
}

void BM_MonteCarloParallel(benchmark::State& state) {
  const auto cfg = mc_config(state);
  for (auto _ : state) benchmark::DoNotOptimize(run_monte_carlo(cfg).mean_tau_hat);
  state.counters["threads"] = omp_get_max_threads();
}

PermutationProblem window(std::size_t k) {
  SimulationConfig cfg;
  cfg.N = 5000;
  const auto ds = generate_sample(cfg, 11);
  return permutation_problem(ds, {cfg.ell, cfg.H}, cfg.xbar, k, Adjustment::Linear);
}

void BM_RandomizationSerial(benchmark::State& state) {
  const auto prob = window(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(randomization_pvalue_serial(prob, -0.14, 2000, 5).p_value);
}

void BM_RandomizationParallel(benchmark::State& state) {
  const auto prob = window(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(randomization_pvalue(prob, -0.14, 2000, 5).p_value);
  state.counters["threads"] = omp_get_max_threads();
}

void BM_BergerBoos(benchmark::State& state) {
  SimulationConfig cfg;
  cfg.N = 5000;
  const auto ds = generate_sample(cfg, 11);
  const bool parallel = state.range(0) != 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        bergerboos_pvalue(ds, {cfg.ell, cfg.H}, cfg.xbar, 60, Adjustment::Constant, 0.01, 1000, 20, 5, parallel)
            .p_star);
}

}  // namespace

BENCHMARK(BM_MonteCarloSerial)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarloParallel)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RandomizationSerial)->Arg(40)->Arg(120)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RandomizationParallel)->Arg(40)->Arg(120)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BergerBoos)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
