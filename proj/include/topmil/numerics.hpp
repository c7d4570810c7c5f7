// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace topmil {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transposed() const;
  bool all_finite() const noexcept;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Probabilities over K classes; entries in [0,1] summing to one.
struct ProbVector {
  Vector values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T without materializing the transpose.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

/// Softmax down each column, stabilized by the column maximum.
Matrix softmax_columns(const Matrix& m);
/// Backward of softmax_columns given its output and the upstream gradient.
Matrix softmax_columns_backward(const Matrix& out, const Matrix& grad_out);

/// Stabilized softmax of a vector.
Vector softmax(std::span<const double> logits);
double log_sum_exp(std::span<const double> logits);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);
/// Returns v / |v|; throws DegenerateInput on a zero or non-finite norm.
Vector normalized(std::span<const double> v);
double cosine(std::span<const double> a, std::span<const double> b);

/// softmax(sims / tau), the CLIP-style zero-shot matching rule.
ProbVector class_probabilities(std::span<const double> sims, double tau);

inline constexpr double kCrossEntropyFloor = 1e-12;

/// -log(max(p[y], 1e-12)).
double cross_entropy(const ProbVector& p, std::size_t y);

/// -log softmax(logits)[y], computed with log-sum-exp. Exact for every finite
/// logit vector; its gradient with respect to the logits is softmax - onehot.
double cross_entropy_from_logits(std::span<const double> logits, std::size_t y);

using ScalarFunction = std::function<double(std::span<const double>)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

/// Central-difference check of `analytic` (the claimed gradient of f at x0).
/// Error per coordinate is |analytic - numeric| / max(1, |numeric|).
GradCheckReport grad_check_report(const ScalarFunction& f, std::span<const double> analytic,
                                  std::span<const double> x0, double eps);

double grad_check(const ScalarFunction& f, std::span<const double> analytic,
                  std::span<const double> x0, double eps);

/// FNV-1a digest over the raw bytes of a sequence of doubles.
std::uint64_t fingerprint(std::span<const double> values, std::uint64_t seed = 14695981039346656037ull);

}  // namespace topmil
