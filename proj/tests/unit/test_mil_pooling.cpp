// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>

#include "topmil/errors.hpp"
#include "topmil/mil_pooling.hpp"
#include "topmil/rng.hpp"

using namespace topmil;

namespace {

Matrix unit_rows(Rng& rng, std::size_t n, std::size_t m) {
  Matrix z(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    for (double& v : z.row(r)) v = rng.normal();
    const Vector u = normalized(z.row(r));
    std::ranges::copy(u, z.row(r).begin());
  }
  return z;
}

Matrix permute_rows(const Matrix& z, const std::vector<std::size_t>& perm) {
  Matrix out(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) std::ranges::copy(z.row(perm[r]), out.row(r).begin());
  return out;
}

double frob_inner(const Matrix& a, const Matrix& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) acc += a.data()[i] * b.data()[i];
  return acc;
}

}  // namespace

TEST_CASE("prompt-guided pooling hand example") {
  const PoolingResult r = prompt_guided_pool(Matrix::identity(2), Matrix::identity(2));
  CHECK(r.W(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(r.W(0, 1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  CHECK(r.W(1, 0) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  CHECK(r.W(1, 1) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(r.F[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.F[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("prompt-guided pooling against a numpy oracle") {
  // values computed offline with numpy: W = softmax(Z P^T, axis=0), F = mean_k (W^T Z)_k
  const Matrix Z{{1.0, 0.0}, {0.6, 0.8}, {0.0, 1.0}};
  const Matrix P{{0.8, 0.6}, {-0.6, 0.8}};
  const PoolingResult r = prompt_guided_pool(Z, P);
  const double W[3][2] = {{0.3341976102317183, 0.13393874228350705},
                          {0.39218452866640524, 0.3229128744491976},
                          {0.2736178611018765, 0.5431483832672953}};
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 2; ++k) CHECK(r.W(j, k) == doctest::Approx(W[j][k]).epsilon(1e-12));
  CHECK(r.F[0] == doctest::Approx(0.4485973971922935).epsilon(1e-12));
  CHECK(r.F[1] == doctest::Approx(0.694422083430827).epsilon(1e-12));
  const Vector c = instance_coefficients(r.W);
  CHECK(c[0] == doctest::Approx(0.23406817625761267).epsilon(1e-12));
  CHECK(c[2] == doctest::Approx(0.40838312218458594).epsilon(1e-12));
}

TEST_CASE("prompt-guided pooling edge cases") {
  Rng rng(1);
  const Matrix P = unit_rows(rng, 3, 4);
  SUBCASE("single instance") {
    const Matrix z = unit_rows(rng, 1, 4);
    const PoolingResult r = prompt_guided_pool(z, P);
    for (std::size_t k = 0; k < 3; ++k) CHECK(r.W(0, k) == 1.0);
    for (std::size_t c = 0; c < 4; ++c) CHECK(r.F[c] == doctest::Approx(z(0, c)).epsilon(1e-15));
  }
  SUBCASE("identical instances") {
    const Matrix z1 = unit_rows(rng, 1, 4);
    Matrix z(5, 4);
    for (std::size_t r = 0; r < 5; ++r) std::ranges::copy(z1.row(0), z.row(r).begin());
    const PoolingResult r = prompt_guided_pool(z, P);
    for (std::size_t c = 0; c < 4; ++c) CHECK(r.F[c] == doctest::Approx(z1(0, c)).epsilon(1e-14));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(prompt_guided_pool(Matrix(0, 4), P), DegenerateInput);
    CHECK_THROWS_AS(prompt_guided_pool(unit_rows(rng, 3, 5), P), ContractViolation);
  }
}

TEST_CASE("pooling invariants on random bags") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(40), m = 2 + rng.below(16), np = 2 + rng.below(8);
    const Matrix Z = unit_rows(rng, n, m);
    const Matrix P = unit_rows(rng, np, m);
    const PoolingResult r = prompt_guided_pool(Z, P);
    for (std::size_t k = 0; k < np; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(r.W(j, k) > 0.0);
        CHECK(r.W(j, k) <= 1.0);
        s += r.W(j, k);
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
    const Vector c = instance_coefficients(r.W);
    CHECK(std::abs(std::accumulate(c.begin(), c.end(), 0.0) - 1.0) <= 1e-9);
    Vector rebuilt(m, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      CHECK(c[j] >= 0.0);
      for (std::size_t d = 0; d < m; ++d) rebuilt[d] += c[j] * Z(j, d);
    }
    for (std::size_t d = 0; d < m; ++d) CHECK(std::abs(rebuilt[d] - r.F[d]) <= 1e-12);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const Matrix Zp = permute_rows(Z, perm);
    const Vector Fp = prompt_guided_pool(Zp, P).F;
    const Vector mp = mean_pool(Zp), mx = max_pool(Zp), m0 = mean_pool(Z), x0 = max_pool(Z);
    AttentionParams att;
    Rng init(trial);
    att = AttentionParams::init(m, 8, init);
    const AttentionResult a = attention_pool(Z, att), ap = attention_pool(Zp, att);
    for (std::size_t d = 0; d < m; ++d) {
      CHECK(std::abs(Fp[d] - r.F[d]) <= 1e-12);
      CHECK(std::abs(mp[d] - m0[d]) <= 1e-12);
      CHECK(mx[d] == x0[d]);
      CHECK(std::abs(ap.F[d] - a.F[d]) <= 1e-12);
    }
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(ap.weights[j] - a.weights[perm[j]]) <= 1e-15);
  }
}

TEST_CASE("mean and max pooling") {
  const Matrix z{{1.0, 0.0}, {0.0, 1.0}};
  CHECK(mean_pool(z) == Vector{0.5, 0.5});
  CHECK(max_pool(z) == Vector{1.0, 1.0});
  const Matrix one{{0.3, -0.2}};
  CHECK(mean_pool(one) == Vector{0.3, -0.2});
  CHECK(max_pool(one) == Vector{0.3, -0.2});
  const Matrix dup{{0.3, -0.2}, {0.3, -0.2}};
  CHECK(max_pool(dup) == max_pool(one));
  CHECK_THROWS_AS(mean_pool(Matrix(0, 2)), DegenerateInput);
  CHECK_THROWS_AS(max_pool(Matrix(0, 2)), DegenerateInput);
}

TEST_CASE("attention pooling") {
  Rng rng(4);
  const Matrix Z = unit_rows(rng, 6, 5);
  AttentionParams p = AttentionParams::init(5, 16, rng);
  CHECK(p.V.rows() == 16);
  CHECK(p.V.cols() == 5);
  SUBCASE("single instance") {
    const AttentionResult r = attention_pool(unit_rows(rng, 1, 5), p);
    CHECK(r.weights == Vector{1.0});
  }
  SUBCASE("V = 0 equals mean pooling") {
    std::ranges::fill(p.V.data(), 0.0);
    const AttentionResult r = attention_pool(Z, p);
    const Vector m = mean_pool(Z);
    for (std::size_t d = 0; d < 5; ++d) CHECK(std::abs(r.F[d] - m[d]) <= 1e-12);
  }
  SUBCASE("dimension mismatch") { CHECK_THROWS_AS(attention_pool(unit_rows(rng, 3, 4), p), ContractViolation); }
  SUBCASE("backward matches finite differences") {
    Vector g(5);
    rng.fill_uniform(g, -1.0, 1.0);
    const AttentionResult fwd = attention_pool(Z, p);
    const AttentionGrads grads = attention_pool_backward(Z, p, fwd, g);
    auto fV = [&](std::span<const double> flat) {
      AttentionParams q = p;
      q.V = Matrix(16, 5, Vector(flat.begin(), flat.end()));
      return dot(attention_pool(Z, q).F, g);
    };
    auto fw = [&](std::span<const double> flat) {
      AttentionParams q = p;
      q.w = Vector(flat.begin(), flat.end());
      return dot(attention_pool(Z, q).F, g);
    };
    CHECK(grad_check(fV, grads.dV.data(), p.V.data(), 1e-6) < 1e-7);
    CHECK(grad_check(fw, grads.dw, p.w, 1e-6) < 1e-7);
  }
}

TEST_CASE("prompt-guided pooling backward matches finite differences") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(10), m = 3 + rng.below(5), np = 2 + rng.below(4);
    const Matrix Z = unit_rows(rng, n, m);
    const Matrix P = unit_rows(rng, np, m);
    Vector g(m);
    rng.fill_uniform(g, -1.0, 1.0);
    Matrix gw(n, np);
    rng.fill_uniform(gw.data(), -1.0, 1.0);
    const Matrix dP = prompt_guided_pool_backward(Z, prompt_guided_pool(Z, P), g, gw);
    auto f = [&](std::span<const double> flat) {
      const PoolingResult r = prompt_guided_pool(Z, Matrix(np, m, Vector(flat.begin(), flat.end())));
      return dot(r.F, g) + frob_inner(r.W, gw);
    };
    CHECK(grad_check(f, dP.data(), P.data(), 1e-6) < 1e-7);
  }
}

TEST_CASE("diversity loss") {
  CHECK(diversity_loss(Matrix::identity(3)) == doctest::Approx(0.0));
  const Matrix same{{0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}};
  CHECK(diversity_loss(same) == doctest::Approx(1.0).epsilon(1e-12));
  const Matrix sixty{{1.0, 0.0}, {0.5, std::sqrt(3.0) / 2.0}};
  CHECK(diversity_loss(sixty) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(diversity_loss(Matrix{{1.0, 0.0}}), ContractViolation);

  Rng rng(3);
  const Matrix P = unit_rows(rng, 5, 7);
  auto f = [&](std::span<const double> flat) { return diversity_loss(Matrix(5, 7, Vector(flat.begin(), flat.end()))); };
  CHECK(grad_check(f, diversity_loss_backward(P).data(), P.data(), 1e-6) < 1e-8);
}

TEST_CASE("weight correlation variant") {
  Rng rng(5);
  const Matrix Z = unit_rows(rng, 9, 4);
  const Matrix P = unit_rows(rng, 3, 4);
  const Matrix W = prompt_guided_pool(Z, P).W;
  const double v = weight_correlation_loss(W);
  CHECK(v >= -1.0);
  CHECK(v <= 1.0);
  Matrix same(4, 3, 0.25);
  CHECK(weight_correlation_loss(same) == doctest::Approx(1.0).epsilon(1e-12));
  auto f = [&](std::span<const double> flat) { return weight_correlation_loss(Matrix(9, 3, Vector(flat.begin(), flat.end()))); };
  CHECK(grad_check(f, weight_correlation_loss_backward(W).data(), W.data(), 1e-6) < 1e-7);
  CHECK(parse_diversity("weight_correlation") == DiversityVariant::WeightCorrelation);
  CHECK_THROWS_AS(parse_diversity("nope"), ConfigurationError);
}

TEST_CASE("pooler names round trip") {
  for (auto k : {PoolerKind::PromptGuided, PoolerKind::Attention, PoolerKind::Mean, PoolerKind::Max})
    CHECK(parse_pooler(to_string(k)) == k);
  CHECK_THROWS_AS(parse_pooler("sum"), ConfigurationError);
}
