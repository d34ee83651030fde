#include <benchmark/benchmark.h>

#include "flexmarket/analysis.hpp"
#include "flexmarket_cli/run_config.hpp"

using namespace flexmarket;

namespace {

MarketInstance recipe_instance(const char* name, Formulation f) {
  cli::RunConfig cfg = cli::load_config(std::string(FLEXMARKET_RECIPE_DIR) + "/" + name + ".ini");
  MarketInstance inst = cli::make_scenario(cfg).instance;
  inst.formulation = f;
  return inst;
}

void BM_Parse141(benchmark::State& state) {
  const auto path = cli::resolve_case("case141");
  for (auto _ : state) benchmark::DoNotOptimize(build_radial(read_case_file(path)));
}
BENCHMARK(BM_Parse141)->Unit(benchmark::kMicrosecond);

void BM_Build(benchmark::State& state) {
  const MarketInstance inst = recipe_instance("case141-sl2", static_cast<Formulation>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(build(inst));
}
BENCHMARK(BM_Build)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_Clear(benchmark::State& state) {
  static const char* names[] = {"case69-sl2", "case141-sl2"};
  const MarketInstance inst =
      recipe_instance(names[state.range(0)], static_cast<Formulation>(state.range(1)));
  int iterations = 0;
  for (auto _ : state) {
    const ClearingResult r = clear(inst);
    iterations = r.diagnostics.iterations;
    benchmark::DoNotOptimize(r.objective);
  }
  state.counters["ipm_iterations"] = iterations;
}
BENCHMARK(BM_Clear)->ArgsProduct({{0, 1}, {0, 1}})->ArgNames({"case", "socp"})->Unit(benchmark::kMillisecond);

void BM_MonteCarlo(benchmark::State& state) {
  const MarketInstance inst = recipe_instance("case141-sl2", Formulation::kLP);
  ScenarioConfig cfg;
  cfg.samples = static_cast<int>(state.range(0));
  MonteCarloOptions opt;
  opt.threads = 1;
  for (auto _ : state) benchmark::DoNotOptimize(run_monte_carlo(inst, cfg, opt));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MonteCarlo)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
