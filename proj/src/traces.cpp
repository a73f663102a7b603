#include "thoughtflow/traces.hpp"

#include <exception>
#include <string>

#include "thoughtflow/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace thoughtflow {

std::uint64_t record_flow_seed(std::uint64_t seed, const Record& record) {
  return derive_seed(seed, 0xf10e, record.id);
}

namespace {

FlowTrace trace_record(const ModelBundle& bundle, const Record& r, const StoppingConfig& config,
                       std::uint64_t seed) {
  return run_flow(bundle, r.x, config, record_flow_seed(seed, r), std::to_string(r.id), r.label);
}

}  // namespace

std::vector<FlowTrace> collect_traces_serial(const ModelBundle& bundle,
                                             std::span<const Record> records,
                                             const StoppingConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<FlowTrace> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(trace_record(bundle, r, config, seed));
  return out;
}

std::vector<FlowTrace> collect_traces_parallel(const ModelBundle& bundle,
                                               std::span<const Record> records,
                                               const StoppingConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<FlowTrace> out(records.size());
  const auto n = static_cast<std::ptrdiff_t>(records.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = trace_record(bundle, records[i], config, seed);
    } catch (...) {
#pragma omp critical(thoughtflow_trace_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<FlowTrace> collect_traces(const ModelBundle& bundle, std::span<const Record> records,
                                      const StoppingConfig& config, std::uint64_t seed,
                                      Execution execution) {
  return execution == Execution::serial ? collect_traces_serial(bundle, records, config, seed)
                                        : collect_traces_parallel(bundle, records, config, seed);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace thoughtflow
