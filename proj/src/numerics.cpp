// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#include "topmil/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "topmil/errors.hpp"
#include "topmil/rng.hpp"

namespace topmil {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ContractViolation("matrix data length " + std::to_string(data_.size()) +
                            " does not match " + std::to_string(rows_) + "x" +
                            std::to_string(cols_));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ContractViolation("ragged matrix initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ContractViolation("matmul: " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " times " + std::to_string(b.rows()) +
                            "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ContractViolation("matmul_transposed: inner dimensions " + std::to_string(a.cols()) +
                            " and " + std::to_string(b.cols()) + " differ");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

Matrix softmax_columns(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double peak = -INFINITY;
    for (std::size_t r = 0; r < m.rows(); ++r) peak = std::max(peak, m(r, c));
    double total = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      out(r, c) = std::exp(m(r, c) - peak);
      total += out(r, c);
    }
    for (std::size_t r = 0; r < m.rows(); ++r) out(r, c) /= total;
  }
  return out;
}

Matrix softmax_columns_backward(const Matrix& out, const Matrix& grad_out) {
  Matrix grad_in(out.rows(), out.cols());
  for (std::size_t c = 0; c < out.cols(); ++c) {
    double inner = 0.0;
    for (std::size_t r = 0; r < out.rows(); ++r) inner += out(r, c) * grad_out(r, c);
    for (std::size_t r = 0; r < out.rows(); ++r)
      grad_in(r, c) = out(r, c) * (grad_out(r, c) - inner);
  }
  return grad_in;
}

Vector softmax(std::span<const double> logits) {
  Vector out(logits.size());
  if (logits.empty()) return out;
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double log_sum_exp(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - peak);
  return peak + std::log(total);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ContractViolation("dot: lengths " + std::to_string(a.size()) + " and " +
                            std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Vector normalized(std::span<const double> v) {
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateInput("cannot normalize a zero-norm vector");
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateInput("cosine of a zero-norm vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

ProbVector class_probabilities(std::span<const double> sims, double tau) {
  if (!(tau > 0.0)) throw ContractViolation("temperature must be positive");
  Vector scaled(sims.begin(), sims.end());
  for (double& s : scaled) s /= tau;
  return ProbVector{softmax(scaled)};
}

double cross_entropy(const ProbVector& p, std::size_t y) {
  if (y >= p.size()) {
    throw ContractViolation("class index " + std::to_string(y) + " out of range for K=" +
                            std::to_string(p.size()));
  }
  return -std::log(std::max(p[y], kCrossEntropyFloor));
}

double cross_entropy_from_logits(std::span<const double> logits, std::size_t y) {
  if (y >= logits.size()) {
    throw ContractViolation("class index " + std::to_string(y) + " out of range for K=" +
                            std::to_string(logits.size()));
  }
  return log_sum_exp(logits) - logits[y];
}

GradCheckReport grad_check_report(const ScalarFunction& f, std::span<const double> analytic,
                                  std::span<const double> x0, double eps) {
  if (analytic.size() != x0.size()) {
    throw ContractViolation("grad_check: gradient has " + std::to_string(analytic.size()) +
                            " entries for " + std::to_string(x0.size()) + " parameters");
  }
  if (!(eps > 1e-7 && eps < 1e-3)) throw ContractViolation("grad_check: eps must lie in (1e-7, 1e-3)");

  GradCheckReport report;
  Vector x(x0.begin(), x0.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = f(x);
    x[i] = saved - eps;
    const double down = f(x);
    x[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw DegenerateInput("grad_check: objective is not finite near coordinate " +
                            std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    if (err > report.max_relative_error || i == 0) {
      report.max_relative_error = std::max(report.max_relative_error, err);
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
  }
  return report;
}

double grad_check(const ScalarFunction& f, std::span<const double> analytic,
                  std::span<const double> x0, double eps) {
  return grad_check_report(f, analytic, x0, eps).max_relative_error;
}

std::uint64_t fingerprint(std::span<const double> values, std::uint64_t seed) {
  return fnv1a(std::as_bytes(values), seed);
}

}  // namespace topmil
