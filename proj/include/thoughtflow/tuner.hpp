#pragma once

// Joint grid search over the two stopping thresholds.
//
// Axes: t_steps = 1..100 plus the t_steps = 0 baseline as the first row (101
// rows), and 100 t_js values k * sqrt(ln 2) / 99, k = 0..99 (both endpoints
// included). A cell holds the validation accuracy improvement over the
// unmodified prediction, in percentage points.
//
// Each validation flow runs once at the loosest setting (t_steps = 100,
// t_js = sqrt(ln 2)); every cell is read off by truncating those traces.
//
// CSV layout: header "t_steps,<t_js_0>,...,<t_js_99>" (101 columns), then one
// row per t_steps value, starting with 0: "<t_steps>,<improvement>,...".

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "thoughtflow/dataset.hpp"
#include "thoughtflow/flow.hpp"
#include "thoughtflow/model.hpp"
#include "thoughtflow/traces.hpp"

namespace thoughtflow {

inline constexpr std::size_t kJsCells = 100;
inline constexpr std::size_t kMaxGridSteps = 100;

struct GridAxes {
  std::vector<std::size_t> t_steps;
  std::vector<double> t_js;

  static GridAxes standard();
};

struct TunerGrid {
  GridAxes axes;
  /// Row-major: row = t_steps index, column = t_js index.
  std::vector<double> improvement;
  std::size_t instances = 0;
  std::size_t base_correct = 0;
  JsReferent referent = JsReferent::consecutive;

  double at(std::size_t steps_index, std::size_t js_index) const {
    return improvement[steps_index * axes.t_js.size() + js_index];
  }
  double base_accuracy() const;
};

struct Thresholds {
  std::size_t t_steps = 0;
  double t_js = 0.0;
  /// Validation improvement of the selected cell, percentage points.
  double improvement = 0.0;
};

/// Flow settings shared by every cell; t_steps and t_js are overridden.
TunerGrid evaluate_grid(const ModelBundle& bundle, std::span<const Record> validation,
                        const StoppingConfig& flow, std::uint64_t seed,
                        Execution execution = Execution::parallel);

/// Fills a grid from traces that ran at the loosest setting.
TunerGrid grid_from_traces(const std::vector<FlowTrace>& traces, const GridAxes& axes,
                           JsReferent referent);

/// Argmax cell; ties go to the smaller t_steps, then the smaller t_js.
Thresholds select_thresholds(const TunerGrid& grid);

void write_grid_csv(std::ostream& out, const TunerGrid& grid);
/// Parses the CSV written by write_grid_csv (improvements and axes only).
TunerGrid read_grid_csv(std::istream& in);

nlohmann::json grid_metadata(const TunerGrid& grid, const Thresholds& selected,
                             const StoppingConfig& flow, std::uint64_t seed);

}  // namespace thoughtflow
