#pragma once

// Dense vectors, matrices and the elementwise kernels shared by the plain
// forward path and the differentiation tape. Every forward value the tape
// records is produced by one of these kernels, so the two paths agree bitwise.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "thoughtflow/rng.hpp"

namespace thoughtflow {

inline constexpr double kSeluScale = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}
  explicit Vector(std::span<const double> values) : data_(values.begin(), values.end()) {}

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  operator std::span<const double>() const { return data_; }

  const std::vector<double>& values() const { return data_; }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> data_;
};

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(std::span<const double> values, std::string_view what);

/// out[i] = sum_j w[i*cols + j] * x[j] + b[i], with rows = b.size(), cols = x.size().
void dense_kernel(std::span<const double> x, std::span<const double> w,
                  std::span<const double> b, std::span<double> out);

Vector dense_forward(std::span<const double> input, const Matrix& weights,
                     std::span<const double> bias);

double selu(double x);
double selu_derivative(double x);
Vector selu(std::span<const double> input);

double sigmoid(double x);

/// Max-shifted softmax. Throws DimensionError on empty input.
Vector softmax(std::span<const double> logits);
void softmax_into(std::span<const double> logits, std::span<double> out);

/// Inverted-dropout scale factors: 0 with probability `rate`, else 1/(1-rate).
/// rate == 0 yields all ones. Throws ConfigError unless 0 <= rate < 1.
std::vector<double> dropout_mask(std::size_t n, double rate, Rng& rng);
std::vector<double> dropout_mask(std::size_t n, double rate, std::uint64_t seed);

/// Applies a freshly drawn inverted-dropout mask.
Vector dropout(std::span<const double> input, double rate, Rng& rng);

/// Elementwise product with a mask from dropout_mask().
Vector apply_mask(std::span<const double> input, std::span<const double> mask);

Vector concat(std::span<const double> a, std::span<const double> b);

/// Index of the largest entry; the lowest index wins ties.
std::size_t argmax(std::span<const double> values);

double l1_distance(std::span<const double> a, std::span<const double> b);

/// Throws ContractError unless entries are non-negative and sum to 1 within `tolerance`.
void require_probability_vector(std::span<const double> p, double tolerance, std::string_view what);

}  // namespace thoughtflow
