#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "thoughtflow/rng.hpp"
#include "thoughtflow/tape.hpp"
#include "thoughtflow/tensor.hpp"

namespace thoughtflow {

/// Fully-connected layer y = W x + b.
struct DenseLayer {
  Matrix weights;
  Vector bias;

  DenseLayer() = default;
  DenseLayer(Matrix w, Vector b);

  std::size_t input_dim() const { return weights.cols(); }
  std::size_t output_dim() const { return weights.rows(); }

  /// LeCun-normal weights (variance 1/fan_in), zero bias.
  static DenseLayer lecun_normal(std::size_t in, std::size_t out, Rng& rng);
  static DenseLayer zeros(std::size_t in, std::size_t out);

  Vector forward(std::span<const double> x) const;
};

/// Tape handles for one layer's parameters.
struct LayerVars {
  Var weights;
  Var bias;
};

/// Binds a layer's parameters into `tape` without copying. The layer must
/// outlive the tape.
LayerVars bind_layer(Tape& tape, const DenseLayer& layer, bool trainable);

using EncoderVars = std::vector<LayerVars>;

struct LabelVars {
  LayerVars first;
  LayerVars second;
};

struct CorrectionVars {
  LayerVars first;
  LayerVars second;
  LayerVars output;
};

/// Feedforward encoder x -> phi(x): dense layers with SELU between them and a
/// linear output. An encoder without layers is the identity (for
/// pre-extracted features).
class Encoder {
 public:
  Encoder() = default;
  Encoder(std::size_t input_dim, std::vector<DenseLayer> layers);

  static Encoder identity(std::size_t dim);
  static Encoder random(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                        std::size_t output_dim, Rng& rng);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const;
  bool is_identity() const { return layers_.empty(); }

  Vector encode(std::span<const double> x) const;
  EncoderVars bind(Tape& tape, bool trainable) const;
  Var encode(Tape& tape, const EncoderVars& vars, Var x) const;

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

 private:
  std::size_t input_dim_ = 0;
  std::vector<DenseLayer> layers_;
};

/// The logits and their softmax distribution: one state of the flow.
struct Thought {
  Vector logits;
  Vector probs;
};

/// f_label: two blocks of SELU followed by a fully-connected layer.
class LabelModule {
 public:
  LabelModule() = default;
  LabelModule(DenseLayer first, DenseLayer second);

  static LabelModule random(std::size_t feature_dim, std::size_t hidden, std::size_t classes,
                            Rng& rng);

  std::size_t feature_dim() const { return first_.input_dim(); }
  std::size_t num_classes() const { return second_.output_dim(); }

  Vector logits(std::span<const double> phi) const;
  LabelVars bind(Tape& tape, bool trainable) const;
  Var logits(Tape& tape, const LabelVars& vars, Var phi) const;

  DenseLayer& first() { return first_; }
  DenseLayer& second() { return second_; }
  const DenseLayer& first() const { return first_; }
  const DenseLayer& second() const { return second_; }

 private:
  DenseLayer first_;
  DenseLayer second_;
};

/// How the correction module treats its encoding branch.
struct ScoreMode {
  bool sampled = false;
  std::uint64_t seed = 0;

  static ScoreMode deterministic() { return {}; }
  static ScoreMode sampled_with(std::uint64_t seed) { return {true, seed}; }
};

/// f_corr: [probs; dropout(phi)] -> two SELU->FC blocks -> FC -> sigmoid.
class CorrectionModule {
 public:
  CorrectionModule() = default;
  CorrectionModule(std::size_t num_classes, std::size_t feature_dim, DenseLayer first,
                   DenseLayer second, DenseLayer output, double dropout_rate);

  static CorrectionModule random(std::size_t num_classes, std::size_t feature_dim,
                                 std::size_t hidden, double dropout_rate, Rng& rng);

  std::size_t num_classes() const { return num_classes_; }
  std::size_t feature_dim() const { return feature_dim_; }
  double dropout_rate() const { return dropout_rate_; }

  /// Mask applied to phi under `mode`: all ones when deterministic.
  std::vector<double> encoding_mask(ScoreMode mode) const;

  /// Pre-sigmoid output for an already-masked encoding.
  double logit(std::span<const double> probs, std::span<const double> masked_phi) const;
  double score(std::span<const double> probs, std::span<const double> phi, ScoreMode mode) const;

  CorrectionVars bind(Tape& tape, bool trainable) const;
  /// Records the module on `tape`; returns the scalar pre-sigmoid logit.
  Var logit(Tape& tape, const CorrectionVars& vars, Var probs, Var masked_phi) const;

  DenseLayer& first() { return first_; }
  DenseLayer& second() { return second_; }
  DenseLayer& output() { return output_; }
  const DenseLayer& first() const { return first_; }
  const DenseLayer& second() const { return second_; }
  const DenseLayer& output() const { return output_; }

 private:
  std::size_t num_classes_ = 0;
  std::size_t feature_dim_ = 0;
  DenseLayer first_;
  DenseLayer second_;
  DenseLayer output_;
  double dropout_rate_ = 0.2;
};

struct Architecture {
  std::size_t input_dim = 0;
  std::size_t feature_dim = 16;
  std::size_t num_classes = 0;
  std::vector<std::size_t> encoder_hidden{32, 32};
  bool identity_encoder = false;
  std::size_t label_hidden = 32;
  std::size_t correction_hidden = 64;
  double dropout_rate = 0.2;
};

struct BundleMetadata {
  std::uint64_t base_seed = 0;
  std::uint64_t correction_seed = 0;
  bool base_trained = false;
  bool correction_trained = false;
  std::string provenance;
};

/// Encoder, label module and correction module with consistent dimensions.
class ModelBundle {
 public:
  ModelBundle() = default;
  ModelBundle(Encoder encoder, LabelModule label, CorrectionModule correction,
              BundleMetadata meta = {});

  static ModelBundle create(const Architecture& arch, std::uint64_t seed);

  std::size_t input_dim() const { return encoder_.input_dim(); }
  std::size_t feature_dim() const { return encoder_.output_dim(); }
  std::size_t num_classes() const { return label_.num_classes(); }
  double dropout_rate() const { return correction_.dropout_rate(); }

  Vector encode(std::span<const double> x) const;
  Thought label_logits(std::span<const double> phi) const;
  /// Probability that argmax(y_hat) is correct. Throws ContractError if
  /// y_hat is not a probability vector to 1e-6.
  double correctness_score(std::span<const double> y_hat, std::span<const double> phi,
                           ScoreMode mode) const;

  Encoder& encoder() { return encoder_; }
  LabelModule& label() { return label_; }
  CorrectionModule& correction() { return correction_; }
  const Encoder& encoder() const { return encoder_; }
  const LabelModule& label() const { return label_; }
  const CorrectionModule& correction() const { return correction_; }
  BundleMetadata& meta() { return meta_; }
  const BundleMetadata& meta() const { return meta_; }

  /// FNV-1a over the encoder and label-module parameter bytes.
  std::uint64_t backbone_checksum() const;
  std::uint64_t correction_checksum() const;

 private:
  void validate() const;

  Encoder encoder_;
  LabelModule label_;
  CorrectionModule correction_;
  BundleMetadata meta_;
};

/// Parameter views of the encoder and label module, in serialization order.
std::vector<std::span<double>> backbone_parameters(ModelBundle& bundle);
std::vector<std::span<double>> correction_parameters(ModelBundle& bundle);

}  // namespace thoughtflow
