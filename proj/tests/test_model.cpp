#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "thoughtflow/errors.hpp"
#include "thoughtflow/flow.hpp"
#include "thoughtflow/model.hpp"

using namespace thoughtflow;
using tf_test::random_bundle;
using tf_test::random_vector;

namespace {

DenseLayer layer(std::size_t rows, std::size_t cols, std::vector<double> w, std::vector<double> b) {
  return DenseLayer(Matrix(rows, cols, std::move(w)), Vector(std::move(b)));
}

// c = 2, d = 1: the correction module reduces to s = sigmoid(w . softmax(z)).
// Both SELU blocks act on positive values, where SELU is lambda * x, so
// weights I / lambda pass the probabilities through unchanged.
ModelBundle micro_model(double w0, double w1) {
  const double inv = 1.0 / kSeluScale;
  LabelModule label(layer(2, 1, {0, 0}, {0, 0}), layer(2, 2, {0, 0, 0, 0}, {0, 0}));
  CorrectionModule corr(2, 1, layer(2, 3, {inv, 0, 0, 0, inv, 0}, {0, 0}),
                        layer(2, 2, {inv, 0, 0, inv}, {0, 0}), layer(1, 2, {w0, w1}, {0}), 0.0);
  return ModelBundle(Encoder::identity(1), std::move(label), std::move(corr));
}

ModelBundle zero_output_bundle(std::uint64_t seed) {
  ModelBundle b = random_bundle(seed);
  auto& out = b.correction().output();
  out = DenseLayer::zeros(out.input_dim(), 1);
  return b;
}

}  // namespace

TEST_CASE("encoder: identity configurations") {
  const std::vector<double> x{0.5, -2.0, 3.25};
  CHECK(Encoder::identity(3).encode(x).values() == x);
  const Encoder linear(3, {DenseLayer(Matrix::identity(3), Vector(3))});
  CHECK(linear.encode(x).values() == x);
  CHECK_THROWS_AS(Encoder::identity(3).encode(std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("encoder: zero input through a zero-bias network stays zero") {
  Rng rng(1);
  const Encoder enc = Encoder::random(5, {7, 7}, 4, rng);
  for (double v : enc.encode(std::vector<double>(5, 0.0))) CHECK(v == 0.0);
}

TEST_CASE("encoder: random input gives a finite encoding of length d") {
  Rng rng(2);
  const Encoder enc = Encoder::random(5, {7, 7}, 4, rng);
  for (int k = 0; k < 20; ++k) {
    const Vector phi = enc.encode(random_vector(rng, 5, 3.0));
    CHECK(phi.size() == 4);
    for (double v : phi) CHECK(std::isfinite(v));
  }
}

TEST_CASE("label module: forced logits [2, 0]") {
  const LabelModule label(layer(3, 1, {1, 2, 3}, {0, 0, 0}),
                          layer(2, 3, {0, 0, 0, 0, 0, 0}, {2, 0}));
  Rng rng(3);
  const ModelBundle b(Encoder::identity(1), label, CorrectionModule::random(2, 1, 4, 0.2, rng));
  const Thought t = b.label_logits(std::vector<double>{0.7});
  const double e2 = std::exp(2.0);
  CHECK(t.logits == Vector{2.0, 0.0});
  CHECK(t.probs[0] == doctest::Approx(e2 / (e2 + 1.0)).epsilon(1e-15));
  CHECK(t.probs[0] == doctest::Approx(0.8808).epsilon(1e-4));
  CHECK(t.probs[1] == doctest::Approx(0.1192).epsilon(1e-3));
}

TEST_CASE("label module: repeated calls are bit-identical and give probabilities") {
  const ModelBundle b = random_bundle(4);
  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    const Vector phi = b.encode(random_vector(rng, 4));
    const Thought a = b.label_logits(phi);
    CHECK(a.logits == b.label_logits(phi).logits);
    CHECK_NOTHROW(require_probability_vector(a.probs, 1e-12, "probs"));
  }
}

TEST_CASE("correction: zero output layer scores exactly one half with zero gradient") {
  const ModelBundle b = zero_output_bundle(6);
  Rng rng(7);
  const Vector phi = b.encode(random_vector(rng, 4));
  const Thought t = b.label_logits(phi);
  CHECK(b.correctness_score(t.probs, phi, ScoreMode::deterministic()) == 0.5);
  CHECK(b.correctness_score(t.probs, phi, ScoreMode::sampled_with(3)) == 0.5);
  const ScoreGradient g = correctness_gradient_once(b, phi, t.logits, ScoreMode::deterministic());
  CHECK(g.score == 0.5);
  for (double v : g.gradient) CHECK(v == 0.0);
}

TEST_CASE("correction: deterministic mode repeats, sampled mode varies with the seed") {
  const ModelBundle b = random_bundle(8, 4, 3, 0.5);
  Rng rng(9);
  const Vector phi = b.encode(random_vector(rng, 4));
  const Thought t = b.label_logits(phi);
  const double s = b.correctness_score(t.probs, phi, ScoreMode::deterministic());
  CHECK(s > 0.0);
  CHECK(s < 1.0);
  CHECK(s == b.correctness_score(t.probs, phi, ScoreMode::deterministic()));
  CHECK(b.correctness_score(t.probs, phi, ScoreMode::sampled_with(1)) !=
        b.correctness_score(t.probs, phi, ScoreMode::sampled_with(2)));
}

TEST_CASE("correction: dropout touches the encoding only") {
  const ModelBundle b = random_bundle(10, 4, 3, 0.5);
  Rng rng(11);
  const Vector phi = b.encode(random_vector(rng, 4));
  const Thought t = b.label_logits(phi);
  const ScoreMode mode = ScoreMode::sampled_with(99);
  const auto mask = b.correction().encoding_mask(mode);
  CHECK(mask.size() == b.feature_dim());
  const double expected = sigmoid(b.correction().logit(t.probs, apply_mask(phi, mask)));
  CHECK(b.correctness_score(t.probs, phi, mode) == expected);
}

TEST_CASE("correction: rejects a non-probability input") {
  const ModelBundle b = random_bundle(12);
  const Vector phi = b.encode(std::vector<double>(4, 0.1));
  CHECK_THROWS_AS(b.correctness_score(std::vector<double>{0.5, 0.5, 0.1}, phi, ScoreMode::deterministic()),
                  ContractError);
  CHECK_NOTHROW(b.correctness_score(std::vector<double>{0.5, 0.5 + 5e-7, 0.0}, phi,
                                    ScoreMode::deterministic()));
}

TEST_CASE("gradient: c = 2 micro-model matches the chain rule") {
  Rng rng(13);
  for (int k = 0; k < 50; ++k) {
    const double w0 = 4.0 * uniform01(rng) - 2.0;
    const double w1 = 4.0 * uniform01(rng) - 2.0;
    const ModelBundle b = micro_model(w0, w1);
    const auto z = random_vector(rng, 2, 2.0);
    const std::vector<double> phi{0.3};
    const ScoreGradient g = correctness_gradient_once(b, phi, z, ScoreMode::deterministic());

    const Vector p = softmax(z);
    const double s = sigmoid(w0 * p[0] + w1 * p[1]);
    // d(w.p)/dz0 = p0 p1 (w0 - w1); dz1 is its negative.
    const double inner = p[0] * p[1] * (w0 - w1);
    CHECK(std::abs(g.score - s) < 1e-12);
    CHECK(std::abs(g.gradient[0] - s * (1.0 - s) * inner) < 1e-10);
    CHECK(std::abs(g.gradient[1] + s * (1.0 - s) * inner) < 1e-10);
  }
}

TEST_CASE("bundle: dimension mismatches are rejected") {
  Rng rng(14);
  CHECK_THROWS_AS(ModelBundle(Encoder::identity(3), LabelModule::random(4, 5, 2, rng),
                              CorrectionModule::random(2, 4, 5, 0.2, rng)),
                  DimensionError);
  CHECK_THROWS_AS(ModelBundle(Encoder::identity(4), LabelModule::random(4, 5, 2, rng),
                              CorrectionModule::random(3, 4, 5, 0.2, rng)),
                  DimensionError);
}

TEST_CASE("bundle: creation is seed-deterministic") {
  CHECK(random_bundle(15).backbone_checksum() == random_bundle(15).backbone_checksum());
  CHECK(random_bundle(15).correction_checksum() == random_bundle(15).correction_checksum());
  CHECK(random_bundle(15).backbone_checksum() != random_bundle(16).backbone_checksum());
}
