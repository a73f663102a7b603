#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "thoughtflow/dataset.hpp"
#include "thoughtflow/flow.hpp"
#include "thoughtflow/model.hpp"
#include "thoughtflow/traces.hpp"
#include "thoughtflow/trainer.hpp"
#include "thoughtflow/tuner.hpp"

namespace thoughtflow {

/// Transitions between the step-0 prediction and the final flow prediction.
struct CorrectionStats {
  std::size_t wrong_to_right = 0;
  std::size_t right_to_wrong = 0;
  /// Wrong before and after, but a different wrong class.
  std::size_t wrong_to_wrong_changed = 0;
  /// Same predicted class before and after.
  std::size_t unchanged = 0;
  std::size_t total = 0;
  double base_accuracy = 0.0;
  double flow_accuracy = 0.0;
};

CorrectionStats correction_stats_from_traces(const std::vector<FlowTrace>& traces);

/// Runs the flow on every record under `config` (which carries the tuned
/// thresholds). Traces are returned through `traces_out` when non-null.
CorrectionStats correction_stats(const ModelBundle& bundle, std::span<const Record> records,
                                 const StoppingConfig& config, std::uint64_t seed,
                                 std::vector<FlowTrace>* traces_out = nullptr,
                                 Execution execution = Execution::parallel);

void write_stats_csv(std::ostream& out, const CorrectionStats& stats);

/// x + epsilon * sign(d CE(f_label(phi(x)), gold) / dx).
Vector fgsm_attack(const ModelBundle& bundle, std::span<const double> x, std::size_t gold,
                   double epsilon);
std::vector<Record> fgsm_attack_records(const ModelBundle& bundle, std::span<const Record> records,
                                        double epsilon);

/// Percentages.
struct FgsmRow {
  double epsilon = 0.0;
  double base_accuracy = 0.0;
  double flow_accuracy = 0.0;
  double improvement = 0.0;
};

inline const std::vector<double> kDefaultFgsmLevels{0.0, 0.001, 0.01, 0.1, 1.0};

/// One row per epsilon. The JS threshold is disabled (forced to sqrt(ln 2)).
std::vector<FgsmRow> fgsm_sweep(const ModelBundle& bundle, std::span<const Record> records,
                                const std::vector<double>& epsilons, StoppingConfig config,
                                std::uint64_t seed, Execution execution = Execution::parallel);

/// "epsilon,base_accuracy,flow_accuracy,improvement"
void write_fgsm_csv(std::ostream& out, const std::vector<FgsmRow>& rows);

struct PipelineConfig {
  /// input_dim, num_classes and identity_encoder are taken from the dataset.
  Architecture arch;
  TrainConfig base{.learning_rate = 3e-3, .batch_size = 32, .epochs = 30};
  TrainConfig correction{.learning_rate = 1e-3, .batch_size = 32, .epochs = 10};
  /// Flow settings; thresholds are replaced by the tuned ones.
  StoppingConfig flow;
  Execution execution = Execution::parallel;
};

struct PipelineResult {
  ModelBundle bundle;
  double correction_auc = 0.0;
  double correction_bce = 0.0;
  double constant_bce = 0.0;
  TunerGrid grid;
  Thresholds thresholds;
  CorrectionStats validation;
  CorrectionStats test;
};

/// Architecture from `config` with dataset dimensions filled in.
Architecture architecture_for(const Dataset& data, const PipelineConfig& config);

/// Train base on `train_split`, train correction on `correction_split`, measure
/// the correction module on `tune_split`, tune there, and evaluate `test_split`.
PipelineResult run_pipeline(const Dataset& data, const PipelineConfig& config, std::uint64_t seed,
                            const std::vector<Record>& train_split,
                            const std::vector<Record>& correction_split,
                            const std::vector<Record>& tune_split,
                            const std::vector<Record>& test_split);

/// Standard protocol: correction module trained on "train", tuned on "val",
/// evaluated on "test".
PipelineResult run_pipeline(const Dataset& data, const PipelineConfig& config, std::uint64_t seed);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Sample standard deviation (n - 1); 0 for fewer than two values.
MeanStd mean_std(const std::vector<double>& values);

/// Draws n records with per-class counts proportional to `weights` (largest
/// remainder). Without replacement where a class pool is large enough, with
/// replacement otherwise. Classes with positive weight but an empty pool are
/// skipped with a warning.
std::vector<Record> resample_by_class(const std::vector<Record>& pool, std::size_t num_classes,
                                      const std::vector<double>& weights, std::size_t n, Rng& rng,
                                      std::vector<std::string>* warnings = nullptr);

struct ShiftConfig {
  std::vector<double> train_weights{0.7, 0.2, 0.1};
  std::vector<double> eval_weights{0.1, 0.2, 0.7};
  std::vector<double> deltas{0.001, 0.01};
  std::size_t train_size = 1000;
  std::size_t val_size = 600;
  std::size_t test_size = 1000;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  void validate(std::size_t num_classes) const;
};

struct ShiftRun {
  std::uint64_t seed = 0;
  double delta = 0.0;
  Thresholds thresholds;
  double validation_base = 0.0;  // percent
  double validation_flow = 0.0;
  double test_base = 0.0;
  double test_flow = 0.0;
};

struct ShiftSummary {
  double delta = 0.0;
  MeanStd initial;
  MeanStd flow;
  MeanStd improvement;
};

struct LabelShiftReport {
  std::vector<ShiftRun> runs;
  std::vector<ShiftSummary> summary;
  std::vector<std::string> warnings;
};

/// Resamples skewed train / val / test splits from the dataset's pools, trains
/// the base model on the train split, trains the correction module on one half
/// of the validation split, tunes on the other half, and evaluates the test
/// split for every delta.
LabelShiftReport label_shift_run(const Dataset& base, const ShiftConfig& shift,
                                 const PipelineConfig& config);

/// Table layout: "delta,initial_mean,initial_std,flow_mean,flow_std,improvement_mean,improvement_std"
void write_shift_summary_csv(std::ostream& out, const LabelShiftReport& report);
/// One line per (seed, delta).
void write_shift_runs_csv(std::ostream& out, const LabelShiftReport& report);

/// Manifest written next to every experiment's results.
nlohmann::json experiment_manifest(const std::string& experiment, const nlohmann::json& config,
                                   const std::vector<std::uint64_t>& seeds);

nlohmann::json to_json(const StoppingConfig& config);
nlohmann::json to_json(const TrainConfig& config);

}  // namespace thoughtflow
