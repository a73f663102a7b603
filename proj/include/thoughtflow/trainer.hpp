#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "thoughtflow/dataset.hpp"
#include "thoughtflow/model.hpp"

namespace thoughtflow {

enum class Phase { base, correction };
enum class OptimizerKind { adam, sgd };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Loss weight on correctness label 1 (correction phase only).
  double positive_weight = 1.0;

  void validate() const;
};

struct EpochMetrics {
  Phase phase = Phase::base;
  std::size_t epoch = 0;
  std::string split = "train";
  double loss = 0.0;
  double accuracy = 0.0;
};

using MetricsSink = std::function<void(const EpochMetrics&)>;

/// One metrics-log line: "phase=<base|correction> epoch=<k> split=<name> loss=<x> accuracy=<y>".
std::string format_metrics_line(const EpochMetrics& m);
EpochMetrics parse_metrics_line(std::string_view line);

/// Trains encoder and label module with softmax cross-entropy. Marks the
/// bundle base-trained. Throws DivergenceError on a non-finite loss.
void train_base(ModelBundle& bundle, const std::vector<Record>& train, const TrainConfig& config,
                const MetricsSink& sink = {});

/// Fresh bundle from `arch`, then train_base.
ModelBundle train_base(const std::vector<Record>& train, const Architecture& arch,
                       const TrainConfig& config, const MetricsSink& sink = {});

/// 1 iff the label module's argmax (lowest index on ties) equals the gold label.
std::vector<int> make_correctness_labels(const ModelBundle& bundle,
                                         const std::vector<Record>& records);

/// Trains the correction module on correctness labels while the encoder and
/// label module stay frozen. Dropout is applied to phi during training.
/// Throws LifecycleError if the base phase has not run.
void train_correction(ModelBundle& bundle, const std::vector<Record>& train,
                      const TrainConfig& config, const MetricsSink& sink = {});

/// Fraction of records whose base prediction is correct.
double base_accuracy(const ModelBundle& bundle, const std::vector<Record>& records);

/// Mean softmax cross-entropy of the base model.
double mean_cross_entropy(const ModelBundle& bundle, const std::vector<Record>& records);

/// Deterministic correctness scores s for every record (at the base prediction).
std::vector<double> correctness_scores(const ModelBundle& bundle,
                                       const std::vector<Record>& records);

/// Mean binary cross-entropy of `scores` against `labels`.
double binary_cross_entropy(const std::vector<double>& scores, const std::vector<int>& labels);

/// Area under the ROC curve via the rank-sum statistic (ties get mid-ranks).
/// Returns 0.5 when one class is absent.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace thoughtflow
