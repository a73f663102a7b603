#include "thoughtflow/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "thoughtflow/errors.hpp"
#include "thoughtflow/io.hpp"
#include "thoughtflow/rng.hpp"
#include "thoughtflow/tape.hpp"

namespace thoughtflow {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (!(positive_weight > 0.0)) throw ConfigError("positive-class weight must be positive");
}

namespace {

const char* phase_name(Phase p) { return p == Phase::base ? "base" : "correction"; }

class Optimizer {
 public:
  Optimizer(std::vector<std::span<double>> params, const TrainConfig& config)
      : params_(std::move(params)), config_(config) {
    for (const auto& p : params_) {
      first_moment_.emplace_back(p.size(), 0.0);
      second_moment_.emplace_back(p.size(), 0.0);
    }
  }

  void step(const std::vector<std::span<const double>>& grads) {
    ++t_;
    const double lr = config_.learning_rate;
    if (config_.optimizer == OptimizerKind::sgd) {
      for (std::size_t k = 0; k < params_.size(); ++k) {
        for (std::size_t i = 0; i < params_[k].size(); ++i) params_[k][i] -= lr * grads[k][i];
      }
      return;
    }
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& m = first_moment_[k];
      auto& v = second_moment_[k];
      for (std::size_t i = 0; i < params_[k].size(); ++i) {
        const double g = grads[k][i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        params_[k][i] -= lr * mhat / (std::sqrt(vhat) + config_.adam_epsilon);
      }
    }
  }

 private:
  std::vector<std::span<double>> params_;
  TrainConfig config_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  std::size_t t_ = 0;
};

void push_layer(std::vector<Var>& out, const LayerVars& v) {
  out.push_back(v.weights);
  out.push_back(v.bias);
}

std::vector<std::span<const double>> gradients(const Tape& tape, const std::vector<Var>& vars) {
  std::vector<std::span<const double>> out;
  out.reserve(vars.size());
  for (Var v : vars) out.push_back(tape.grad(v));
  return out;
}

void check_records(const std::vector<Record>& records, std::size_t input_dim,
                   std::size_t num_classes) {
  for (const auto& r : records) {
    if (r.x.size() != input_dim) {
      throw DimensionError("record " + std::to_string(r.id) + " has " +
                           std::to_string(r.x.size()) + " values, model expects " +
                           std::to_string(input_dim));
    }
    if (r.label >= num_classes) {
      throw DimensionError("record " + std::to_string(r.id) + " has label " +
                           std::to_string(r.label) + " outside the model's " +
                           std::to_string(num_classes) + " classes");
    }
  }
}

template <typename BatchFn>
void run_epochs(std::size_t n, const TrainConfig& config, Phase phase, const MetricsSink& sink,
                BatchFn&& batch_fn) {
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, 0x5a0f, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      const double batch_loss = batch_fn(epoch, batch, correct);
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError(std::string(phase_name(phase)) + " training: non-finite loss at epoch " +
                              std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      }
      loss_sum += batch_loss * static_cast<double>(batch.size());
    }
    if (sink) {
      EpochMetrics m;
      m.phase = phase;
      m.epoch = epoch;
      m.loss = loss_sum / static_cast<double>(n);
      m.accuracy = static_cast<double>(correct) / static_cast<double>(n);
      sink(m);
    }
  }
}

}  // namespace

std::string format_metrics_line(const EpochMetrics& m) {
  std::ostringstream out;
  out << "phase=" << phase_name(m.phase) << " epoch=" << m.epoch << " split=" << m.split
      << " loss=" << format_double(m.loss) << " accuracy=" << format_double(m.accuracy);
  return out.str();
}

EpochMetrics parse_metrics_line(std::string_view line) {
  EpochMetrics m;
  std::istringstream in{std::string(line)};
  std::string token;
  int seen = 0;
  while (in >> token) {
    auto eq = token.find('=');
    if (eq == std::string::npos) throw FormatError("metrics line: malformed token '" + token + "'");
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (key == "phase") {
      if (value == "base") {
        m.phase = Phase::base;
      } else if (value == "correction") {
        m.phase = Phase::correction;
      } else {
        throw FormatError("metrics line: unknown phase '" + value + "'");
      }
    } else if (key == "epoch") {
      m.epoch = static_cast<std::size_t>(parse_double(value, "epoch"));
    } else if (key == "split") {
      m.split = value;
    } else if (key == "loss") {
      m.loss = parse_double(value, "loss");
    } else if (key == "accuracy") {
      m.accuracy = parse_double(value, "accuracy");
    } else {
      throw FormatError("metrics line: unknown key '" + key + "'");
    }
    ++seen;
  }
  if (seen != 5) throw FormatError("metrics line: expected 5 fields");
  return m;
}

void train_base(ModelBundle& bundle, const std::vector<Record>& train, const TrainConfig& config,
                const MetricsSink& sink) {
  config.validate();
  if (train.empty()) throw ConfigError("train_base: empty training set");
  check_records(train, bundle.input_dim(), bundle.num_classes());

  auto params = backbone_parameters(bundle);
  Optimizer optimizer(params, config);
  const Encoder& encoder = bundle.encoder();
  const LabelModule& label = bundle.label();

  run_epochs(train.size(), config, Phase::base, sink,
             [&](std::size_t, std::span<const std::size_t> batch, std::size_t& correct) {
               Tape tape;
               auto enc_vars = encoder.bind(tape, true);
               auto label_vars = label.bind(tape, true);
               Var total{};
               bool first = true;
               for (std::size_t idx : batch) {
                 const Record& r = train[idx];
                 Var x = tape.bind(r.x, false);
                 Var z = label.logits(tape, label_vars, encoder.encode(tape, enc_vars, x));
                 if (argmax(tape.value(z)) == r.label) ++correct;
                 Var l = tape.softmax_cross_entropy(z, r.label);
                 total = first ? l : tape.add(total, l);
                 first = false;
               }
               Var loss = tape.scale(total, 1.0 / static_cast<double>(batch.size()));
               const double value = tape.scalar(loss);
               if (!std::isfinite(value)) return value;
               tape.backward(loss);
               std::vector<Var> vars;
               for (const auto& lv : enc_vars) push_layer(vars, lv);
               push_layer(vars, label_vars.first);
               push_layer(vars, label_vars.second);
               optimizer.step(gradients(tape, vars));
               return value;
             });
  bundle.meta().base_trained = true;
  bundle.meta().base_seed = config.seed;
  bundle.meta().correction_trained = false;
  bundle.meta().provenance = provenance();
}

ModelBundle train_base(const std::vector<Record>& train, const Architecture& arch,
                       const TrainConfig& config, const MetricsSink& sink) {
  ModelBundle bundle = ModelBundle::create(arch, derive_seed(config.seed, 0x1417));
  train_base(bundle, train, config, sink);
  return bundle;
}

std::vector<int> make_correctness_labels(const ModelBundle& bundle,
                                         const std::vector<Record>& records) {
  std::vector<int> labels;
  labels.reserve(records.size());
  for (const auto& r : records) {
    auto thought = bundle.label_logits(bundle.encode(r.x));
    labels.push_back(argmax(thought.probs) == r.label ? 1 : 0);
  }
  return labels;
}

void train_correction(ModelBundle& bundle, const std::vector<Record>& train,
                      const TrainConfig& config, const MetricsSink& sink) {
  config.validate();
  if (!bundle.meta().base_trained) {
    throw LifecycleError("train_correction: the encoder and label module must be trained first");
  }
  if (train.empty()) throw ConfigError("train_correction: empty training set");
  check_records(train, bundle.input_dim(), bundle.num_classes());

  const auto labels = make_correctness_labels(bundle, train);
  std::vector<Vector> phis;
  std::vector<Vector> probs;
  phis.reserve(train.size());
  probs.reserve(train.size());
  for (const auto& r : train) {
    phis.push_back(bundle.encode(r.x));
    probs.push_back(bundle.label_logits(phis.back()).probs);
  }

  auto params = correction_parameters(bundle);
  Optimizer optimizer(params, config);
  const CorrectionModule& correction = bundle.correction();
  const std::size_t d = bundle.feature_dim();

  run_epochs(train.size(), config, Phase::correction, sink,
             [&](std::size_t epoch, std::span<const std::size_t> batch, std::size_t& correct) {
               Tape tape;
               auto vars = correction.bind(tape, true);
               Var total{};
               bool first = true;
               for (std::size_t idx : batch) {
                 const auto mask = dropout_mask(
                     d, correction.dropout_rate(),
                     derive_seed(config.seed, 0xc0ffee + epoch, train[idx].id));
                 Var p = tape.bind(probs[idx].span(), false);
                 Var phi = tape.mul_mask(tape.bind(phis[idx].span(), false), mask);
                 Var logit = correction.logit(tape, vars, p, phi);
                 const int target = labels[idx];
                 if ((tape.scalar(logit) > 0.0 ? 1 : 0) == target) ++correct;
                 Var l = tape.sigmoid_binary_cross_entropy(logit, static_cast<double>(target),
                                                           config.positive_weight);
                 total = first ? l : tape.add(total, l);
                 first = false;
               }
               Var loss = tape.scale(total, 1.0 / static_cast<double>(batch.size()));
               const double value = tape.scalar(loss);
               if (!std::isfinite(value)) return value;
               tape.backward(loss);
               std::vector<Var> pv;
               push_layer(pv, vars.first);
               push_layer(pv, vars.second);
               push_layer(pv, vars.output);
               optimizer.step(gradients(tape, pv));
               return value;
             });
  bundle.meta().correction_trained = true;
  bundle.meta().correction_seed = config.seed;
}

double base_accuracy(const ModelBundle& bundle, const std::vector<Record>& records) {
  if (records.empty()) return 0.0;
  const auto labels = make_correctness_labels(bundle, records);
  const auto hits = std::accumulate(labels.begin(), labels.end(), std::size_t{0});
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double mean_cross_entropy(const ModelBundle& bundle, const std::vector<Record>& records) {
  if (records.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : records) {
    auto z = bundle.label().logits(bundle.encode(r.x));
    const double shift = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - shift);
    total += shift + std::log(sum) - z[r.label];
  }
  return total / static_cast<double>(records.size());
}

std::vector<double> correctness_scores(const ModelBundle& bundle,
                                       const std::vector<Record>& records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto phi = bundle.encode(r.x);
    auto thought = bundle.label_logits(phi);
    out.push_back(bundle.correctness_score(thought.probs, phi, ScoreMode::deterministic()));
  }
  return out;
}

double binary_cross_entropy(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw DimensionError("binary_cross_entropy: length mismatch");
  if (scores.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = std::clamp(scores[i], 1e-15, 1.0 - 1e-15);
    total += labels[i] ? -std::log(s) : -std::log1p(-s);
  }
  return total / static_cast<double>(scores.size());
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw DimensionError("roc_auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        positive_rank_sum += mid_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return 0.5;
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

}  // namespace thoughtflow
