#include "thoughtflow/tuner.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "thoughtflow/errors.hpp"
#include "thoughtflow/io.hpp"

namespace thoughtflow {

GridAxes GridAxes::standard() {
  GridAxes axes;
  for (std::size_t s = 0; s <= kMaxGridSteps; ++s) axes.t_steps.push_back(s);
  for (std::size_t k = 0; k < kJsCells; ++k) {
    const double ratio = static_cast<double>(k) / static_cast<double>(kJsCells - 1);
    axes.t_js.push_back(k + 1 == kJsCells ? kMaxJsDistance : ratio * kMaxJsDistance);
  }
  return axes;
}

double TunerGrid::base_accuracy() const {
  return instances == 0 ? 0.0 : static_cast<double>(base_correct) / static_cast<double>(instances);
}

TunerGrid grid_from_traces(const std::vector<FlowTrace>& traces, const GridAxes& axes,
                           JsReferent referent) {
  if (traces.empty()) throw ContractError("tuner: empty validation set");
  const std::size_t ns = axes.t_steps.size();
  const std::size_t nj = axes.t_js.size();
  TunerGrid grid;
  grid.axes = axes;
  grid.referent = referent;
  grid.instances = traces.size();

  // net[s][j]: (#correct under cell) - (#correct at step 0), summed over traces.
  std::vector<long long> net(nj * ns, 0);
  for (const auto& trace : traces) {
    if (!trace.gold) throw ContractError("tuner: trace " + trace.instance_id + " has no gold label");
    const std::size_t gold = *trace.gold;
    const int base_hit = argmax(trace.steps.front().probs) == gold ? 1 : 0;
    grid.base_correct += static_cast<std::size_t>(base_hit);
    std::vector<int> hit(trace.steps.size());
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
      hit[i] = argmax(trace.steps[i].probs) == gold ? 1 : 0;
    }
    const std::size_t last = trace.steps.size() - 1;
    for (std::size_t j = 0; j < nj; ++j) {
      // First step whose JS distance exceeds this row's threshold, else the last step.
      std::size_t exceed = last;
      for (std::size_t i = 1; i <= last; ++i) {
        const FlowStep& st = trace.steps[i];
        const double js = referent == JsReferent::consecutive ? st.js_from_prev : st.js_from_start;
        if (js > axes.t_js[j]) {
          exceed = i;
          break;
        }
      }
      for (std::size_t s = 0; s < ns; ++s) {
        const std::size_t budget = axes.t_steps[s];
        if (last < budget && trace.stop_reason == StopReason::step_budget) {
          throw ContractError("tuner: trace " + trace.instance_id + " ran only " +
                              std::to_string(last) + " steps");
        }
        net[s * nj + j] += hit[std::min(budget, exceed)] - base_hit;
      }
    }
  }
  grid.improvement.resize(nj * ns);
  const double n = static_cast<double>(traces.size());
  for (std::size_t k = 0; k < net.size(); ++k) {
    grid.improvement[k] = 100.0 * static_cast<double>(net[k]) / n;
  }
  return grid;
}

TunerGrid evaluate_grid(const ModelBundle& bundle, std::span<const Record> validation,
                        const StoppingConfig& flow, std::uint64_t seed, Execution execution) {
  if (validation.empty()) throw ContractError("tuner: empty validation set");
  StoppingConfig loosest = flow;
  loosest.t_steps = kMaxGridSteps;
  loosest.t_js = kMaxJsDistance;
  const auto traces = collect_traces(bundle, validation, loosest, seed, execution);
  return grid_from_traces(traces, GridAxes::standard(), flow.referent);
}

Thresholds select_thresholds(const TunerGrid& grid) {
  const std::size_t ns = grid.axes.t_steps.size();
  const std::size_t nj = grid.axes.t_js.size();
  if (ns == 0 || nj == 0 || grid.improvement.size() != ns * nj) {
    throw ContractError("select_thresholds: grid is not filled");
  }
  std::size_t best_s = 0;
  std::size_t best_j = 0;
  double best = grid.at(0, 0);
  auto better = [&](std::size_t s, std::size_t j) {
    const double v = grid.at(s, j);
    if (v != best) return v > best;
    const std::size_t steps = grid.axes.t_steps[s];
    const std::size_t best_steps = grid.axes.t_steps[best_s];
    if (steps != best_steps) return steps < best_steps;
    return grid.axes.t_js[j] < grid.axes.t_js[best_j];
  };
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t j = 0; j < nj; ++j) {
      if (better(s, j)) {
        best = grid.at(s, j);
        best_s = s;
        best_j = j;
      }
    }
  }
  return {grid.axes.t_steps[best_s], grid.axes.t_js[best_j], best};
}

void write_grid_csv(std::ostream& out, const TunerGrid& grid) {
  out << "t_steps";
  for (double t : grid.axes.t_js) out << ',' << format_double(t);
  out << '\n';
  for (std::size_t s = 0; s < grid.axes.t_steps.size(); ++s) {
    out << grid.axes.t_steps[s];
    for (std::size_t j = 0; j < grid.axes.t_js.size(); ++j) {
      out << ',' << format_double(grid.at(s, j));
    }
    out << '\n';
  }
}

TunerGrid read_grid_csv(std::istream& in) {
  auto split = [](const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    return fields;
  };
  std::string line;
  if (!std::getline(in, line)) throw FormatError("grid csv: missing header");
  auto header = split(line);
  if (header.empty() || header[0] != "t_steps") {
    throw FormatError("grid csv: header must start with t_steps");
  }
  TunerGrid grid;
  for (std::size_t k = 1; k < header.size(); ++k) {
    grid.axes.t_js.push_back(parse_double(header[k], "grid csv t_js header"));
  }
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    auto fields = split(line);
    if (fields.size() != header.size()) {
      throw FormatError("grid csv: row " + std::to_string(row) + " has " +
                        std::to_string(fields.size()) + " columns, header has " +
                        std::to_string(header.size()));
    }
    const double steps = parse_double(fields[0], "grid csv t_steps");
    if (steps < 0.0 || steps != std::floor(steps)) {
      throw FormatError("grid csv: row " + std::to_string(row) + " t_steps is not a count");
    }
    grid.axes.t_steps.push_back(static_cast<std::size_t>(steps));
    for (std::size_t k = 1; k < fields.size(); ++k) {
      grid.improvement.push_back(parse_double(fields[k], "grid csv cell"));
    }
  }
  return grid;
}

nlohmann::json grid_metadata(const TunerGrid& grid, const Thresholds& selected,
                             const StoppingConfig& flow, std::uint64_t seed) {
  return {{"rows", "t_steps"},
          {"columns", "t_js"},
          {"t_steps_placement", "0..100; row 0 is the unmodified baseline"},
          {"t_js_placement", "k*sqrt(ln 2)/99, k=0..99"},
          {"units", "validation accuracy improvement, percentage points"},
          {"shape", {grid.axes.t_steps.size(), grid.axes.t_js.size()}},
          {"instances", grid.instances},
          {"base_accuracy", grid.base_accuracy()},
          {"js_referent", to_string(grid.referent)},
          {"selected", {{"t_steps", selected.t_steps},
                        {"t_js", selected.t_js},
                        {"improvement", selected.improvement}}},
          {"flow", {{"delta", flow.delta},
                    {"epsilon", flow.epsilon},
                    {"mode", to_string(flow.mode)},
                    {"mc_samples", flow.mc_samples}}},
          {"seed", seed},
          {"provenance", provenance()}};
}

}  // namespace thoughtflow
