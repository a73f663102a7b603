#include <doctest.h>

#include <cmath>
#include <limits>

#include "support.hpp"
#include "thoughtflow/errors.hpp"
#include "thoughtflow/tensor.hpp"

using namespace thoughtflow;
using tf_test::random_vector;

TEST_CASE("dense: identity weights and zero input") {
  const Vector out = dense_forward(std::vector<double>{1, 2}, Matrix::identity(2), std::vector<double>{0, 0});
  CHECK(out == Vector{1, 2});
  const Matrix w(2, 2, {0.3, -7, 2, 11});
  CHECK(dense_forward(std::vector<double>{0, 0}, w, std::vector<double>{3, -1}) == Vector{3, -1});
}

TEST_CASE("dense: matches a long double dot product") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_vector(rng, 5);
    const auto wv = random_vector(rng, 15);
    const auto b = random_vector(rng, 3);
    const Vector out = dense_forward(x, Matrix(3, 5, wv), b);
    for (std::size_t i = 0; i < 3; ++i) {
      long double acc = b[i];
      for (std::size_t j = 0; j < 5; ++j) acc += static_cast<long double>(wv[i * 5 + j]) * x[j];
      CHECK(std::abs(out[i] - static_cast<double>(acc)) < 1e-12);
    }
  }
}

TEST_CASE("dense: shape mismatch") {
  CHECK_THROWS_AS(dense_forward(std::vector<double>{1, 2, 3}, Matrix::identity(2), std::vector<double>{0, 0}),
                  DimensionError);
  CHECK_THROWS_AS(dense_forward(std::vector<double>{1, 2}, Matrix::identity(2), std::vector<double>{0}),
                  DimensionError);
  CHECK_THROWS_AS(Matrix(2, 2, {1, 2, 3}), DimensionError);
}

TEST_CASE("selu: reference values") {
  CHECK(selu(0.0) == 0.0);
  CHECK(selu(1.0) == doctest::Approx(1.0507009873554805).epsilon(1e-15));
  const double tail = 1.0507009873554805 * 1.6732632423543772 * (std::exp(-20.0) - 1.0);
  CHECK(selu(-20.0) == doctest::Approx(tail).epsilon(1e-14));
  CHECK(selu(-20.0) == doctest::Approx(-1.7581).epsilon(1e-4));
  CHECK_THROWS_AS(selu(std::vector<double>{std::numeric_limits<double>::quiet_NaN()}), NumericError);
}

TEST_CASE("softmax: closed forms") {
  const Vector a = softmax(std::vector<double>{0, 0, 0});
  for (double p : a) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const Vector b = softmax(std::vector<double>{std::log(2.0), 0.0});
  CHECK(b[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(b[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(softmax(std::vector<double>{}), DimensionError);
}

TEST_CASE("softmax: long double oracle and shift invariance, c = 100") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = random_vector(rng, 100, 3.0);
    const Vector p = softmax(z);
    long double total = 0.0L;
    for (double v : z) total += std::exp(static_cast<long double>(v));
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      CHECK(std::abs(p[i] - static_cast<double>(std::exp(static_cast<long double>(z[i])) / total)) < 1e-12);
      CHECK(p[i] > 0.0);
      sum += p[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);

    auto shifted = z;
    for (auto& v : shifted) v += 37.5;
    const Vector q = softmax(shifted);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(p[i] - q[i]) < 1e-12);
  }
}

TEST_CASE("softmax: extreme logits stay a finite probability vector") {
  // At +-1e3 the small entries underflow to exactly 0 in double precision, so
  // only the closed interval [0, 1] can be asserted there.
  for (const auto& z : {std::vector<double>{1e3, -1e3}, std::vector<double>{-1e3, 1e3, 0.0},
                        std::vector<double>{1e3, 1e3, 1e3}}) {
    const Vector p = softmax(z);
    double sum = 0.0;
    for (double v : p) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
  const Vector third = softmax(std::vector<double>{1e3, 1e3, 1e3});
  CHECK(third[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("dropout: rate 0 is the identity, seeded masks repeat") {
  Rng rng(3);
  const auto x = random_vector(rng, 50);
  Rng r0(9);
  CHECK(dropout(x, 0.0, r0).values() == x);
  CHECK(dropout_mask(200, 0.5, 77) == dropout_mask(200, 0.5, 77));
  CHECK(dropout_mask(200, 0.5, 77) != dropout_mask(200, 0.5, 78));
  CHECK_THROWS_AS(dropout_mask(3, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(dropout_mask(3, -0.1, 1), ConfigError);
}

TEST_CASE("dropout: law of large numbers at rate 0.5") {
  Rng rng(4);
  std::vector<double> x(10000);
  for (auto& v : x) v = 1.0 + uniform01(rng);
  Rng mask_rng(5);
  const Vector y = dropout(x, 0.5, mask_rng);
  std::size_t zeros = 0;
  double mean_x = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    zeros += y[i] == 0.0;
    if (y[i] != 0.0) CHECK(y[i] == 2.0 * x[i]);
    mean_x += x[i];
    mean_y += y[i];
  }
  CHECK(std::abs(static_cast<double>(zeros) / 10000.0 - 0.5) < 0.02);
  CHECK(std::abs(mean_y / mean_x - 1.0) < 0.02);
}

TEST_CASE("argmax: lowest index wins ties") {
  CHECK(argmax(std::vector<double>{0.2, 0.5, 0.3}) == 1);
  CHECK(argmax(std::vector<double>{0.4, 0.4, 0.2}) == 0);
  CHECK(argmax(std::vector<double>{0.1, 0.45, 0.45}) == 1);
}

TEST_CASE("probability vector contract") {
  CHECK_NOTHROW(require_probability_vector(std::vector<double>{0.25, 0.75}, 1e-6, "p"));
  CHECK_THROWS_AS(require_probability_vector(std::vector<double>{0.25, 0.76}, 1e-6, "p"), ContractError);
  CHECK_THROWS_AS(require_probability_vector(std::vector<double>{-0.1, 1.1}, 1e-6, "p"), ContractError);
}

TEST_CASE("concat and l1") {
  CHECK(concat(std::vector<double>{1, 2}, std::vector<double>{3}) == Vector{1, 2, 3});
  CHECK(l1_distance(std::vector<double>{1, 2}, std::vector<double>{0, 4}) == 3.0);
}
