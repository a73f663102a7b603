#include "thoughtflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "thoughtflow/errors.hpp"

namespace thoughtflow {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("matrix storage has " + std::to_string(data_.size()) +
                         " entries, expected " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void require_finite(std::span<const double> values, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(what) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

void dense_kernel(std::span<const double> x, std::span<const double> w,
                  std::span<const double> b, std::span<double> out) {
  const std::size_t rows = b.size();
  const std::size_t cols = x.size();
  if (w.size() != rows * cols || out.size() != rows) {
    throw DimensionError("dense: weights " + std::to_string(w.size()) + " entries for " +
                         std::to_string(rows) + " outputs and " + std::to_string(cols) +
                         " inputs");
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const double* wr = w.data() + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += wr[j] * x[j];
    out[i] = acc + b[i];
  }
}

Vector dense_forward(std::span<const double> input, const Matrix& weights,
                     std::span<const double> bias) {
  if (weights.cols() != input.size() || weights.rows() != bias.size()) {
    throw DimensionError("dense_forward: weights are " + std::to_string(weights.rows()) + "x" +
                         std::to_string(weights.cols()) + ", input " +
                         std::to_string(input.size()) + ", bias " + std::to_string(bias.size()));
  }
  Vector out(bias.size());
  dense_kernel(input, weights.span(), bias, out.span());
  return out;
}

double selu(double x) {
  return x > 0.0 ? kSeluScale * x : kSeluScale * kSeluAlpha * std::expm1(x);
}

double selu_derivative(double x) {
  return x > 0.0 ? kSeluScale : kSeluScale * kSeluAlpha * std::exp(x);
}

Vector selu(std::span<const double> input) {
  require_finite(input, "selu input");
  Vector out(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = selu(input[i]);
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void softmax_into(std::span<const double> logits, std::span<double> out) {
  if (logits.empty()) throw DimensionError("softmax: empty input");
  require_finite(logits, "softmax logits");
  const double shift = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - shift);
    total += out[i];
  }
  for (double& v : out) v /= total;
}

Vector softmax(std::span<const double> logits) {
  Vector out(logits.size());
  softmax_into(logits, out.span());
  return out;
}

std::vector<double> dropout_mask(std::size_t n, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  std::vector<double> mask(n, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask) m = uniform01(rng) < rate ? 0.0 : keep_scale;
  return mask;
}

std::vector<double> dropout_mask(std::size_t n, double rate, std::uint64_t seed) {
  Rng rng(seed);
  return dropout_mask(n, rate, rng);
}

Vector apply_mask(std::span<const double> input, std::span<const double> mask) {
  if (input.size() != mask.size()) throw DimensionError("apply_mask: length mismatch");
  Vector out(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] * mask[i];
  return out;
}

Vector dropout(std::span<const double> input, double rate, Rng& rng) {
  if (rate == 0.0) return Vector(input);
  return apply_mask(input, dropout_mask(input.size(), rate, rng));
}

Vector concat(std::span<const double> a, std::span<const double> b) {
  Vector out(a.size() + b.size());
  std::copy(a.begin(), a.end(), out.begin());
  std::copy(b.begin(), b.end(), out.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw DimensionError("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("l1_distance: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total;
}

void require_probability_vector(std::span<const double> p, double tolerance, std::string_view what) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ContractError(std::string(what) + ": entries must be finite and non-negative");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > tolerance) {
    throw ContractError(std::string(what) + ": entries sum to " + std::to_string(total) +
                        ", not 1");
  }
}

}  // namespace thoughtflow
