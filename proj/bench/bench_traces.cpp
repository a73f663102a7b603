// Serial reference vs OpenMP trace collection on the bundled benchmark.

#include <benchmark/benchmark.h>

#include "thoughtflow/dataset.hpp"
#include "thoughtflow/flow.hpp"
#include "thoughtflow/model.hpp"
#include "thoughtflow/traces.hpp"

namespace {

using namespace thoughtflow;

struct Fixture {
  Dataset data;
  ModelBundle bundle;

  Fixture() {
    auto spec = SyntheticSpec::benchmark3(7);
    spec.train_size = 10;
    spec.val_size = 512;
    spec.test_size = 10;
    data = generate_synthetic(spec);
    Architecture arch;
    arch.input_dim = data.manifest.input_dim;
    arch.num_classes = data.manifest.num_classes;
    bundle = ModelBundle::create(arch, 11);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void run(benchmark::State& state, Execution execution, GradientMode mode) {
  const auto& f = fixture();
  StoppingConfig cfg;
  cfg.t_steps = static_cast<std::size_t>(state.range(0));
  cfg.mode = mode;
  const auto& records = f.data.split("val").records;
  for (auto _ : state) {
    auto traces = collect_traces(f.bundle, records, cfg, 3, execution);
    benchmark::DoNotOptimize(traces.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(records.size()));
  state.counters["threads"] = execution == Execution::parallel ? max_threads() : 1;
}

void BM_TracesSerial(benchmark::State& s) { run(s, Execution::serial, GradientMode::single); }
void BM_TracesParallel(benchmark::State& s) { run(s, Execution::parallel, GradientMode::single); }
void BM_TracesSerialMcdrop(benchmark::State& s) { run(s, Execution::serial, GradientMode::mcdrop); }
void BM_TracesParallelMcdrop(benchmark::State& s) { run(s, Execution::parallel, GradientMode::mcdrop); }

BENCHMARK(BM_TracesSerial)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TracesParallel)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TracesSerialMcdrop)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TracesParallelMcdrop)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
