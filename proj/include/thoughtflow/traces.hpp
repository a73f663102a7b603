#pragma once

// Batch flow evaluation over a set of records.
//
// collect_traces_serial() is the reference; collect_traces_parallel() splits
// the records over OpenMP threads. Each record's flow seed derives from
// (seed, record id) alone, so both produce bitwise-identical traces.

#include <cstdint>
#include <span>
#include <vector>

#include "thoughtflow/dataset.hpp"
#include "thoughtflow/flow.hpp"
#include "thoughtflow/model.hpp"

namespace thoughtflow {

enum class Execution { serial, parallel };

/// Flow seed of one record.
std::uint64_t record_flow_seed(std::uint64_t seed, const Record& record);

std::vector<FlowTrace> collect_traces_serial(const ModelBundle& bundle,
                                             std::span<const Record> records,
                                             const StoppingConfig& config, std::uint64_t seed);

std::vector<FlowTrace> collect_traces_parallel(const ModelBundle& bundle,
                                               std::span<const Record> records,
                                               const StoppingConfig& config, std::uint64_t seed);

std::vector<FlowTrace> collect_traces(const ModelBundle& bundle, std::span<const Record> records,
                                      const StoppingConfig& config, std::uint64_t seed,
                                      Execution execution = Execution::parallel);

/// Threads available to collect_traces_parallel (1 without OpenMP).
int max_threads();

}  // namespace thoughtflow
