#include "thoughtflow/model.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "thoughtflow/errors.hpp"

namespace thoughtflow {

DenseLayer::DenseLayer(Matrix w, Vector b) : weights(std::move(w)), bias(std::move(b)) {
  if (weights.rows() != bias.size()) {
    throw DimensionError("dense layer: " + std::to_string(weights.rows()) + " rows but bias of " +
                         std::to_string(bias.size()));
  }
}

DenseLayer DenseLayer::lecun_normal(std::size_t in, std::size_t out, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  Matrix w(out, in);
  for (double& v : w.span()) v = normal(rng);
  return {std::move(w), Vector(out)};
}

DenseLayer DenseLayer::zeros(std::size_t in, std::size_t out) {
  return {Matrix(out, in), Vector(out)};
}

Vector DenseLayer::forward(std::span<const double> x) const {
  return dense_forward(x, weights, bias.span());
}

LayerVars bind_layer(Tape& tape, const DenseLayer& layer, bool trainable) {
  return {tape.bind(layer.weights.span(), trainable), tape.bind(layer.bias.span(), trainable)};
}

// Encoder

Encoder::Encoder(std::size_t input_dim, std::vector<DenseLayer> layers)
    : input_dim_(input_dim), layers_(std::move(layers)) {
  std::size_t dim = input_dim_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].input_dim() != dim) {
      throw DimensionError("encoder layer " + std::to_string(i) + " expects " +
                           std::to_string(layers_[i].input_dim()) + " inputs, previous yields " +
                           std::to_string(dim));
    }
    dim = layers_[i].output_dim();
  }
}

Encoder Encoder::identity(std::size_t dim) { return Encoder(dim, {}); }

Encoder Encoder::random(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                        std::size_t output_dim, Rng& rng) {
  std::vector<DenseLayer> layers;
  std::size_t in = input_dim;
  for (std::size_t width : hidden) {
    layers.push_back(DenseLayer::lecun_normal(in, width, rng));
    in = width;
  }
  layers.push_back(DenseLayer::lecun_normal(in, output_dim, rng));
  return Encoder(input_dim, std::move(layers));
}

std::size_t Encoder::output_dim() const {
  return layers_.empty() ? input_dim_ : layers_.back().output_dim();
}

Vector Encoder::encode(std::span<const double> x) const {
  if (x.size() != input_dim_) {
    throw DimensionError("encode: input has length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(input_dim_));
  }
  Vector h(x);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h);
    if (i + 1 < layers_.size()) h = selu(h);
  }
  return h;
}

EncoderVars Encoder::bind(Tape& tape, bool trainable) const {
  EncoderVars vars;
  for (const auto& layer : layers_) vars.push_back(bind_layer(tape, layer, trainable));
  return vars;
}

Var Encoder::encode(Tape& tape, const EncoderVars& vars, Var x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = tape.dense(h, vars[i].weights, vars[i].bias);
    if (i + 1 < layers_.size()) h = tape.selu(h);
  }
  return h;
}

// Label module

LabelModule::LabelModule(DenseLayer first, DenseLayer second)
    : first_(std::move(first)), second_(std::move(second)) {
  if (first_.output_dim() != second_.input_dim()) {
    throw DimensionError("label module: hidden widths disagree");
  }
}

LabelModule LabelModule::random(std::size_t feature_dim, std::size_t hidden, std::size_t classes,
                                Rng& rng) {
  auto first = DenseLayer::lecun_normal(feature_dim, hidden, rng);
  auto second = DenseLayer::lecun_normal(hidden, classes, rng);
  return {std::move(first), std::move(second)};
}

Vector LabelModule::logits(std::span<const double> phi) const {
  if (phi.size() != feature_dim()) {
    throw DimensionError("label_logits: feature vector has length " + std::to_string(phi.size()) +
                         ", expected " + std::to_string(feature_dim()));
  }
  return second_.forward(selu(first_.forward(selu(phi))));
}

LabelVars LabelModule::bind(Tape& tape, bool trainable) const {
  return {bind_layer(tape, first_, trainable), bind_layer(tape, second_, trainable)};
}

Var LabelModule::logits(Tape& tape, const LabelVars& vars, Var phi) const {
  Var h = tape.dense(tape.selu(phi), vars.first.weights, vars.first.bias);
  return tape.dense(tape.selu(h), vars.second.weights, vars.second.bias);
}

// Correction module

CorrectionModule::CorrectionModule(std::size_t num_classes, std::size_t feature_dim,
                                   DenseLayer first, DenseLayer second, DenseLayer output,
                                   double dropout_rate)
    : num_classes_(num_classes),
      feature_dim_(feature_dim),
      first_(std::move(first)),
      second_(std::move(second)),
      output_(std::move(output)),
      dropout_rate_(dropout_rate) {
  if (first_.input_dim() != num_classes_ + feature_dim_ ||
      second_.input_dim() != first_.output_dim() || output_.input_dim() != second_.output_dim() ||
      output_.output_dim() != 1) {
    throw DimensionError("correction module: layer shapes are inconsistent");
  }
  if (!(dropout_rate_ >= 0.0 && dropout_rate_ < 1.0)) {
    throw ConfigError("correction module: dropout rate must lie in [0, 1)");
  }
}

CorrectionModule CorrectionModule::random(std::size_t num_classes, std::size_t feature_dim,
                                          std::size_t hidden, double dropout_rate, Rng& rng) {
  auto first = DenseLayer::lecun_normal(num_classes + feature_dim, hidden, rng);
  auto second = DenseLayer::lecun_normal(hidden, hidden, rng);
  auto output = DenseLayer::lecun_normal(hidden, 1, rng);
  return {num_classes, feature_dim, std::move(first), std::move(second), std::move(output),
          dropout_rate};
}

std::vector<double> CorrectionModule::encoding_mask(ScoreMode mode) const {
  if (!mode.sampled) return std::vector<double>(feature_dim_, 1.0);
  return dropout_mask(feature_dim_, dropout_rate_, mode.seed);
}

double CorrectionModule::logit(std::span<const double> probs,
                               std::span<const double> masked_phi) const {
  Vector u = concat(probs, masked_phi);
  Vector h = first_.forward(selu(u));
  h = second_.forward(selu(h));
  return output_.forward(h)[0];
}

double CorrectionModule::score(std::span<const double> probs, std::span<const double> phi,
                               ScoreMode mode) const {
  if (probs.size() != num_classes_ || phi.size() != feature_dim_) {
    throw DimensionError("correctness_score: expected " + std::to_string(num_classes_) +
                         " probabilities and " + std::to_string(feature_dim_) + " features");
  }
  Vector masked = apply_mask(phi, encoding_mask(mode));
  return sigmoid(logit(probs, masked));
}

CorrectionVars CorrectionModule::bind(Tape& tape, bool trainable) const {
  return {bind_layer(tape, first_, trainable), bind_layer(tape, second_, trainable),
          bind_layer(tape, output_, trainable)};
}

Var CorrectionModule::logit(Tape& tape, const CorrectionVars& vars, Var probs,
                            Var masked_phi) const {
  Var u = tape.concat(probs, masked_phi);
  Var h = tape.dense(tape.selu(u), vars.first.weights, vars.first.bias);
  h = tape.dense(tape.selu(h), vars.second.weights, vars.second.bias);
  return tape.dense(h, vars.output.weights, vars.output.bias);
}

// Bundle

ModelBundle::ModelBundle(Encoder encoder, LabelModule label, CorrectionModule correction,
                         BundleMetadata meta)
    : encoder_(std::move(encoder)),
      label_(std::move(label)),
      correction_(std::move(correction)),
      meta_(std::move(meta)) {
  validate();
}

void ModelBundle::validate() const {
  if (encoder_.output_dim() != label_.feature_dim()) {
    throw DimensionError("bundle: encoder yields " + std::to_string(encoder_.output_dim()) +
                         " features, label module expects " +
                         std::to_string(label_.feature_dim()));
  }
  if (correction_.feature_dim() != label_.feature_dim() ||
      correction_.num_classes() != label_.num_classes()) {
    throw DimensionError("bundle: correction module dimensions disagree with the label module");
  }
}

ModelBundle ModelBundle::create(const Architecture& arch, std::uint64_t seed) {
  if (arch.input_dim == 0 || arch.num_classes < 2) {
    throw ConfigError("architecture needs a positive input dimension and at least two classes");
  }
  Rng rng(seed);
  Encoder encoder = arch.identity_encoder
                        ? Encoder::identity(arch.input_dim)
                        : Encoder::random(arch.input_dim, arch.encoder_hidden, arch.feature_dim, rng);
  const std::size_t d = encoder.output_dim();
  auto label = LabelModule::random(d, arch.label_hidden, arch.num_classes, rng);
  auto correction =
      CorrectionModule::random(arch.num_classes, d, arch.correction_hidden, arch.dropout_rate, rng);
  BundleMetadata meta;
  meta.base_seed = seed;
  return {std::move(encoder), std::move(label), std::move(correction), meta};
}

Vector ModelBundle::encode(std::span<const double> x) const { return encoder_.encode(x); }

Thought ModelBundle::label_logits(std::span<const double> phi) const {
  Thought t;
  t.logits = label_.logits(phi);
  t.probs = softmax(t.logits);
  return t;
}

double ModelBundle::correctness_score(std::span<const double> y_hat, std::span<const double> phi,
                                      ScoreMode mode) const {
  require_probability_vector(y_hat, 1e-6, "correctness_score");
  return correction_.score(y_hat, phi, mode);
}

namespace {

void fnv1a(std::uint64_t& h, std::span<const double> values) {
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
}

void collect(std::vector<std::span<double>>& out, DenseLayer& layer) {
  out.push_back(layer.weights.span());
  out.push_back(layer.bias.span());
}

}  // namespace

std::vector<std::span<double>> backbone_parameters(ModelBundle& bundle) {
  std::vector<std::span<double>> out;
  for (auto& layer : bundle.encoder().layers()) collect(out, layer);
  collect(out, bundle.label().first());
  collect(out, bundle.label().second());
  return out;
}

std::vector<std::span<double>> correction_parameters(ModelBundle& bundle) {
  std::vector<std::span<double>> out;
  collect(out, bundle.correction().first());
  collect(out, bundle.correction().second());
  collect(out, bundle.correction().output());
  return out;
}

std::uint64_t ModelBundle::backbone_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& layer : encoder_.layers()) {
    fnv1a(h, layer.weights.span());
    fnv1a(h, layer.bias.span());
  }
  for (const DenseLayer* layer : {&label_.first(), &label_.second()}) {
    fnv1a(h, layer->weights.span());
    fnv1a(h, layer->bias.span());
  }
  return h;
}

std::uint64_t ModelBundle::correction_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const DenseLayer* layer : {&correction_.first(), &correction_.second(), &correction_.output()}) {
    fnv1a(h, layer->weights.span());
    fnv1a(h, layer->bias.span());
  }
  return h;
}

}  // namespace thoughtflow
