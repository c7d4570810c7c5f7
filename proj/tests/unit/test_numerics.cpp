// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>

#include <doctest.h>

#include "topmil/errors.hpp"
#include "topmil/numerics.hpp"
#include "topmil/rng.hpp"

using namespace topmil;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(-scale, scale);
  return m;
}

}  // namespace

TEST_CASE("matmul 2x2 by 2x1") {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{5}, {6}};
  const Matrix c = matmul(a, b);
  CHECK(c == Matrix{{17}, {39}});
}

TEST_CASE("matmul dimension mismatch") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ContractViolation);
  CHECK_THROWS_AS(matmul_transposed(Matrix(2, 3), Matrix(2, 2)), ContractViolation);
  CHECK_THROWS_AS(Matrix(2, 2, Vector{1, 2, 3}), ContractViolation);
}

TEST_CASE("matmul_transposed agrees with explicit transpose") {
  Rng rng(3);
  const Matrix a = random_matrix(rng, 4, 5, 1.0);
  const Matrix b = random_matrix(rng, 3, 5, 1.0);
  const Matrix x = matmul_transposed(a, b);
  const Matrix y = matmul(a, b.transposed());
  for (std::size_t i = 0; i < x.data().size(); ++i) CHECK(x.data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-14));
}

TEST_CASE("class_probabilities at two temperatures") {
  const ProbVector p = class_probabilities(Vector{0.6, 0.4}, 0.1);
  CHECK(p[0] == doctest::Approx(0.8807970779778823).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.11920292202211769).epsilon(1e-12));
  CHECK(p[0] == doctest::Approx(0.8808).epsilon(1e-4));

  const ProbVector q = class_probabilities(Vector{1.0, 0.0}, 0.01);
  CHECK(q[0] == doctest::Approx(1.0));
  CHECK(q[1] == doctest::Approx(3.720075976020836e-44).epsilon(1e-9));
  CHECK(q[1] > 0.0);
}

TEST_CASE("class_probabilities rejects non-positive tau") {
  CHECK_THROWS_AS(class_probabilities(Vector{0.1, 0.2}, 0.0), ContractViolation);
  CHECK_THROWS_AS(class_probabilities(Vector{0.1, 0.2}, -1.0), ContractViolation);
}

TEST_CASE("cross entropy values and floor") {
  CHECK(cross_entropy(ProbVector{{0.5, 0.5}}, 0) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
  CHECK(cross_entropy(ProbVector{{1.0, 0.0}}, 1) == doctest::Approx(27.631021115928547).epsilon(1e-12));
  CHECK(std::isfinite(cross_entropy(ProbVector{{1.0, 0.0}}, 1)));
  CHECK_THROWS_AS(cross_entropy(ProbVector{{0.5, 0.5}}, 2), ContractViolation);
  CHECK(cross_entropy_from_logits(Vector{0.0, 0.0}, 1) == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy_from_logits(Vector{0.0, 200.0}, 0) == doctest::Approx(200.0));
}

TEST_CASE("cosine") {
  CHECK(cosine(Vector{1, 1}, Vector{1, 0}) == doctest::Approx(0.7071067811865476).epsilon(1e-12));
  CHECK(cosine(Vector{2, 0}, Vector{-3, 0}) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(cosine(Vector{0, 0}, Vector{1, 0}), DegenerateInput);
  CHECK_THROWS_AS(normalized(Vector{0, 0, 0}), DegenerateInput);
  CHECK_THROWS_AS(dot(Vector{1, 2}, Vector{1}), ContractViolation);
}

TEST_CASE("softmax_columns sums to one even for huge entries") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const double scale = trial % 2 ? 1e4 : 3.0;
    const Matrix m = random_matrix(rng, 1 + rng.below(20), 1 + rng.below(6), scale);
    const Matrix s = softmax_columns(m);
    REQUIRE(s.all_finite());
    for (std::size_t c = 0; c < s.cols(); ++c) {
      double sum = 0.0;
      for (std::size_t r = 0; r < s.rows(); ++r) {
        CHECK(s(r, c) >= 0.0);
        sum += s(r, c);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("softmax is shift invariant") {
  const Vector a = softmax(Vector{1.0, 2.0, 3.0});
  const Vector b = softmax(Vector{1001.0, 1002.0, 1003.0});
  for (std::size_t i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  CHECK(log_sum_exp(Vector{1000.0, 1000.0}) == doctest::Approx(1000.0 + std::log(2.0)));
}

TEST_CASE("softmax_columns_backward matches finite differences") {
  Rng rng(5);
  const Matrix x = random_matrix(rng, 5, 3, 2.0);
  const Matrix g = random_matrix(rng, 5, 3, 1.0);
  auto f = [&](std::span<const double> flat) {
    const Matrix s = softmax_columns(Matrix(5, 3, Vector(flat.begin(), flat.end())));
    double acc = 0.0;
    for (std::size_t i = 0; i < s.data().size(); ++i) acc += s.data()[i] * g.data()[i];
    return acc;
  };
  const Matrix analytic = softmax_columns_backward(softmax_columns(x), g);
  CHECK(grad_check(f, analytic.data(), x.data(), 1e-6) < 1e-7);
}

TEST_CASE("grad_check validates its inputs") {
  auto sq = [](std::span<const double> x) { return x[0] * x[0]; };
  const Vector x0{3.0};
  CHECK(grad_check(sq, Vector{6.0}, x0, 1e-5) < 1e-8);
  CHECK(grad_check(sq, Vector{5.0}, x0, 1e-5) == doctest::Approx(1.0 / 6.0).epsilon(1e-6));
  CHECK_THROWS_AS(grad_check(sq, Vector{6.0}, x0, 1e-2), ContractViolation);
  CHECK_THROWS_AS(grad_check(sq, Vector{6.0}, x0, 1e-9), ContractViolation);
  CHECK_THROWS_AS(grad_check(sq, Vector{6.0, 1.0}, x0, 1e-5), ContractViolation);
  auto bad = [](std::span<const double>) { return std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS(grad_check(bad, Vector{0.0}, x0, 1e-5), DegenerateInput);
}

TEST_CASE("fingerprint is sensitive to every bit") {
  Vector v{1.0, 2.0, 3.0};
  const auto h = fingerprint(v);
  CHECK(fingerprint(v) == h);
  v[1] = std::nextafter(v[1], 10.0);
  CHECK(fingerprint(v) != h);
}

TEST_CASE("rng is deterministic and in range") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(a.below(7) == b.below(7));
  }
  // Box-Muller sample moments
  Rng n(1);
  double mean = 0.0, sq = 0.0;
  const int count = 20000;
  for (int i = 0; i < count; ++i) {
    const double x = n.normal();
    mean += x / count;
    sq += x * x / count;
  }
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(sq - 1.0) < 0.05);
}
