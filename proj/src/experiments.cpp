#include "thoughtflow/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "thoughtflow/errors.hpp"
#include "thoughtflow/io.hpp"
#include "thoughtflow/rng.hpp"
#include "thoughtflow/tape.hpp"

namespace thoughtflow {

CorrectionStats correction_stats_from_traces(const std::vector<FlowTrace>& traces) {
  CorrectionStats stats;
  std::size_t base_hits = 0;
  std::size_t flow_hits = 0;
  for (const auto& t : traces) {
    if (!t.gold) throw ContractError("correction_stats: trace " + t.instance_id + " has no gold label");
    const std::size_t before = argmax(t.steps.front().probs);
    const std::size_t after = flow_prediction(t);
    const bool was_right = before == *t.gold;
    const bool is_right = after == *t.gold;
    base_hits += was_right;
    flow_hits += is_right;
    if (before == after) {
      ++stats.unchanged;
    } else if (!was_right && is_right) {
      ++stats.wrong_to_right;
    } else if (was_right && !is_right) {
      ++stats.right_to_wrong;
    } else {
      ++stats.wrong_to_wrong_changed;
    }
  }
  stats.total = traces.size();
  if (!traces.empty()) {
    const double n = static_cast<double>(traces.size());
    stats.base_accuracy = static_cast<double>(base_hits) / n;
    stats.flow_accuracy = static_cast<double>(flow_hits) / n;
  }
  return stats;
}

CorrectionStats correction_stats(const ModelBundle& bundle, std::span<const Record> records,
                                 const StoppingConfig& config, std::uint64_t seed,
                                 std::vector<FlowTrace>* traces_out, Execution execution) {
  auto traces = collect_traces(bundle, records, config, seed, execution);
  auto stats = correction_stats_from_traces(traces);
  if (traces_out) *traces_out = std::move(traces);
  return stats;
}

void write_stats_csv(std::ostream& out, const CorrectionStats& s) {
  out << "total,wrong_to_right,right_to_wrong,wrong_to_wrong_changed,unchanged,base_accuracy,"
         "flow_accuracy\n"
      << s.total << ',' << s.wrong_to_right << ',' << s.right_to_wrong << ','
      << s.wrong_to_wrong_changed << ',' << s.unchanged << ',' << format_double(s.base_accuracy)
      << ',' << format_double(s.flow_accuracy) << '\n';
}

Vector fgsm_attack(const ModelBundle& bundle, std::span<const double> x, std::size_t gold,
                   double epsilon) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError("fgsm: epsilon must be finite and non-negative");
  }
  if (x.size() != bundle.input_dim()) throw DimensionError("fgsm: input length mismatch");
  if (gold >= bundle.num_classes()) throw DimensionError("fgsm: gold class out of range");
  Tape tape;
  auto enc = bundle.encoder().bind(tape, false);
  auto lab = bundle.label().bind(tape, false);
  Var input = tape.variable(x);
  Var z = bundle.label().logits(tape, lab, bundle.encoder().encode(tape, enc, input));
  Var loss = tape.softmax_cross_entropy(z, gold);
  tape.backward(loss);
  auto g = tape.grad(input);
  Vector out(x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double sign = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
    out[i] += epsilon * sign;
  }
  return out;
}

std::vector<Record> fgsm_attack_records(const ModelBundle& bundle, std::span<const Record> records,
                                        double epsilon) {
  std::vector<Record> out(records.begin(), records.end());
  for (auto& r : out) r.x = fgsm_attack(bundle, r.x, r.label, epsilon).values();
  return out;
}

std::vector<FgsmRow> fgsm_sweep(const ModelBundle& bundle, std::span<const Record> records,
                                const std::vector<double>& epsilons, StoppingConfig config,
                                std::uint64_t seed, Execution execution) {
  config.t_js = kMaxJsDistance;
  std::vector<FgsmRow> rows;
  for (double eps : epsilons) {
    const auto attacked = fgsm_attack_records(bundle, records, eps);
    const auto stats = correction_stats(bundle, attacked, config, seed, nullptr, execution);
    rows.push_back({eps, 100.0 * stats.base_accuracy, 100.0 * stats.flow_accuracy,
                    100.0 * (stats.flow_accuracy - stats.base_accuracy)});
  }
  return rows;
}

void write_fgsm_csv(std::ostream& out, const std::vector<FgsmRow>& rows) {
  out << "epsilon,base_accuracy,flow_accuracy,improvement\n";
  for (const auto& r : rows) {
    out << format_double(r.epsilon) << ',' << format_double(r.base_accuracy) << ','
        << format_double(r.flow_accuracy) << ',' << format_double(r.improvement) << '\n';
  }
}

Architecture architecture_for(const Dataset& data, const PipelineConfig& config) {
  Architecture arch = config.arch;
  arch.input_dim = data.manifest.input_dim;
  arch.num_classes = data.manifest.num_classes;
  arch.identity_encoder = arch.identity_encoder || data.manifest.features;
  return arch;
}

PipelineResult run_pipeline(const Dataset& data, const PipelineConfig& config, std::uint64_t seed,
                            const std::vector<Record>& train_split,
                            const std::vector<Record>& correction_split,
                            const std::vector<Record>& tune_split,
                            const std::vector<Record>& test_split) {
  TrainConfig base_cfg = config.base;
  base_cfg.seed = derive_seed(seed, 0xba5e);
  TrainConfig corr_cfg = config.correction;
  corr_cfg.seed = derive_seed(seed, 0xc0dd);

  PipelineResult result{.bundle = train_base(train_split, architecture_for(data, config), base_cfg),
                        .grid = {}, .thresholds = {}, .validation = {}, .test = {}};
  train_correction(result.bundle, correction_split, corr_cfg);

  const auto labels = make_correctness_labels(result.bundle, tune_split);
  const auto scores = correctness_scores(result.bundle, tune_split);
  result.correction_auc = roc_auc(scores, labels);
  result.correction_bce = binary_cross_entropy(scores, labels);
  const double p = static_cast<double>(std::accumulate(labels.begin(), labels.end(), 0)) /
                   static_cast<double>(std::max<std::size_t>(labels.size(), 1));
  result.constant_bce =
      (p <= 0.0 || p >= 1.0) ? 0.0 : -(p * std::log(p) + (1.0 - p) * std::log1p(-p));

  const std::uint64_t flow_seed = derive_seed(seed, 0xf1);
  result.grid = evaluate_grid(result.bundle, tune_split, config.flow, flow_seed, config.execution);
  result.thresholds = select_thresholds(result.grid);

  StoppingConfig tuned = config.flow;
  tuned.t_steps = result.thresholds.t_steps;
  tuned.t_js = result.thresholds.t_js;
  result.validation =
      correction_stats(result.bundle, tune_split, tuned, flow_seed, nullptr, config.execution);
  result.test = correction_stats(result.bundle, test_split, tuned, flow_seed, nullptr, config.execution);
  return result;
}

PipelineResult run_pipeline(const Dataset& data, const PipelineConfig& config, std::uint64_t seed) {
  const auto& train = data.split("train").records;
  return run_pipeline(data, config, seed, train, train, data.split("val").records,
                      data.split("test").records);
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(ss / (n - 1.0));
  return out;
}

std::vector<Record> resample_by_class(const std::vector<Record>& pool, std::size_t num_classes,
                                      const std::vector<double>& weights, std::size_t n, Rng& rng,
                                      std::vector<std::string>* warnings) {
  if (weights.size() != num_classes) throw ConfigError("resample: one weight per class required");
  std::vector<std::vector<const Record*>> by_class(num_classes);
  for (const auto& r : pool) {
    if (r.label < num_classes) by_class[r.label].push_back(&r);
  }
  std::vector<double> w = weights;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (w[k] > 0.0 && by_class[k].empty()) {
      if (warnings) {
        warnings->push_back("class " + std::to_string(k) +
                            " has positive weight but no records in the pool; skipped");
      }
      w[k] = 0.0;
    }
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) throw ConfigError("resample: no class with positive weight has records");

  // Largest-remainder apportionment of n over classes.
  std::vector<std::size_t> counts(num_classes, 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double exact = static_cast<double>(n) * w[k] / total;
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[k];
    remainders.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n && i < remainders.size(); ++i) {
    if (w[remainders[i].second] > 0.0) {
      ++counts[remainders[i].second];
      ++assigned;
    }
  }

  std::vector<Record> out;
  out.reserve(n);
  for (std::size_t k = 0; k < num_classes; ++k) {
    auto& members = by_class[k];
    if (counts[k] <= members.size()) {
      std::shuffle(members.begin(), members.end(), rng);
      for (std::size_t i = 0; i < counts[k]; ++i) out.push_back(*members[i]);
    } else {
      for (std::size_t i = 0; i < counts[k]; ++i) {
        out.push_back(*members[static_cast<std::size_t>(uniform01(rng) * members.size())]);
      }
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

void ShiftConfig::validate(std::size_t num_classes) const {
  for (const auto* w : {&train_weights, &eval_weights}) {
    if (w->size() != num_classes) throw ConfigError("shift: one weight per class required");
    double total = 0.0;
    for (double v : *w) {
      if (!(v >= 0.0)) throw ConfigError("shift: weights must be non-negative");
      total += v;
    }
    if (!(total > 0.0)) throw ConfigError("shift: weights are all zero");
  }
  if (deltas.empty()) throw ConfigError("shift: no delta levels");
  if (seeds.empty()) throw ConfigError("shift: no seeds");
  if (train_size == 0 || val_size < 2 || test_size == 0) {
    throw ConfigError("shift: split sizes must be positive (validation at least 2)");
  }
}

LabelShiftReport label_shift_run(const Dataset& base, const ShiftConfig& shift,
                                 const PipelineConfig& config) {
  const std::size_t c = base.manifest.num_classes;
  shift.validate(c);
  LabelShiftReport report;
  for (std::uint64_t seed : shift.seeds) {
    Rng rng(derive_seed(seed, 0x5417));
    const auto train = resample_by_class(base.split("train").records, c, shift.train_weights,
                                         shift.train_size, rng, &report.warnings);
    const auto val = resample_by_class(base.split("val").records, c, shift.eval_weights,
                                       shift.val_size, rng, &report.warnings);
    const auto test = resample_by_class(base.split("test").records, c, shift.eval_weights,
                                        shift.test_size, rng, &report.warnings);
    const auto counts = class_counts(train, c);
    for (std::size_t k = 0; k < c; ++k) {
      if (counts[k] == 0) {
        report.warnings.push_back("seed " + std::to_string(seed) + ": class " + std::to_string(k) +
                                  " is absent from the resampled training split");
      }
    }
    const std::size_t half = val.size() / 2;
    const std::vector<Record> val_correction(val.begin(), val.begin() + static_cast<std::ptrdiff_t>(half));
    const std::vector<Record> val_tune(val.begin() + static_cast<std::ptrdiff_t>(half), val.end());

    TrainConfig base_cfg = config.base;
    base_cfg.seed = derive_seed(seed, 0xba5e);
    TrainConfig corr_cfg = config.correction;
    corr_cfg.seed = derive_seed(seed, 0xc0dd);
    ModelBundle bundle = train_base(train, architecture_for(base, config), base_cfg);
    train_correction(bundle, val_correction, corr_cfg);

    for (double delta : shift.deltas) {
      StoppingConfig flow = config.flow;
      flow.delta = delta;
      const std::uint64_t flow_seed = derive_seed(seed, 0xf1);
      const TunerGrid grid = evaluate_grid(bundle, val_tune, flow, flow_seed, config.execution);
      const Thresholds th = select_thresholds(grid);
      flow.t_steps = th.t_steps;
      flow.t_js = th.t_js;
      const auto vs = correction_stats(bundle, val_tune, flow, flow_seed, nullptr, config.execution);
      const auto ts = correction_stats(bundle, test, flow, flow_seed, nullptr, config.execution);
      report.runs.push_back({seed, delta, th, 100.0 * vs.base_accuracy, 100.0 * vs.flow_accuracy,
                             100.0 * ts.base_accuracy, 100.0 * ts.flow_accuracy});
    }
  }
  for (double delta : shift.deltas) {
    std::vector<double> initial, flow, improvement;
    for (const auto& r : report.runs) {
      if (r.delta != delta) continue;
      initial.push_back(r.test_base);
      flow.push_back(r.test_flow);
      improvement.push_back(r.test_flow - r.test_base);
    }
    report.summary.push_back({delta, mean_std(initial), mean_std(flow), mean_std(improvement)});
  }
  return report;
}

void write_shift_summary_csv(std::ostream& out, const LabelShiftReport& report) {
  out << "delta,initial_mean,initial_std,flow_mean,flow_std,improvement_mean,improvement_std\n";
  for (const auto& s : report.summary) {
    out << format_double(s.delta) << ',' << format_double(s.initial.mean) << ','
        << format_double(s.initial.stddev) << ',' << format_double(s.flow.mean) << ','
        << format_double(s.flow.stddev) << ',' << format_double(s.improvement.mean) << ','
        << format_double(s.improvement.stddev) << '\n';
  }
}

void write_shift_runs_csv(std::ostream& out, const LabelShiftReport& report) {
  out << "seed,delta,t_steps,t_js,validation_base,validation_flow,test_base,test_flow\n";
  for (const auto& r : report.runs) {
    out << r.seed << ',' << format_double(r.delta) << ',' << r.thresholds.t_steps << ','
        << format_double(r.thresholds.t_js) << ',' << format_double(r.validation_base) << ','
        << format_double(r.validation_flow) << ',' << format_double(r.test_base) << ','
        << format_double(r.test_flow) << '\n';
  }
}

nlohmann::json experiment_manifest(const std::string& experiment, const nlohmann::json& config,
                                   const std::vector<std::uint64_t>& seeds) {
  return {{"experiment", experiment},
          {"config", config},
          {"seeds", seeds},
          {"provenance", provenance()}};
}

nlohmann::json to_json(const StoppingConfig& c) {
  return {{"t_steps", c.t_steps},   {"t_js", c.t_js},
          {"delta", c.delta},       {"epsilon", c.epsilon},
          {"mc_samples", c.mc_samples}, {"mode", to_string(c.mode)},
          {"js_referent", to_string(c.referent)}};
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"optimizer", c.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"positive_weight", c.positive_weight}};
}

}  // namespace thoughtflow
