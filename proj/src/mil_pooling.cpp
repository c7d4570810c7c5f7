// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#include "topmil/mil_pooling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "topmil/errors.hpp"
#include "topmil/rng.hpp"

namespace topmil {
namespace {

void require_bag(const Matrix& Z, std::string_view who) {
  if (Z.rows() == 0) throw DegenerateInput(std::string(who) + ": empty bag");
}

}  // namespace

std::string_view to_string(PoolerKind kind) noexcept {
  switch (kind) {
    case PoolerKind::PromptGuided: return "prompt_guided";
    case PoolerKind::Attention: return "attention";
    case PoolerKind::Mean: return "mean";
    case PoolerKind::Max: return "max";
  }
  return "prompt_guided";
}

PoolerKind parse_pooler(std::string_view text) {
  for (auto k : {PoolerKind::PromptGuided, PoolerKind::Attention, PoolerKind::Mean, PoolerKind::Max})
    if (text == to_string(k)) return k;
  throw ConfigurationError("unknown pooler '" + std::string(text) +
                           "' (expected prompt_guided, attention, mean or max)");
}

std::string_view to_string(DiversityVariant v) noexcept {
  return v == DiversityVariant::PrototypeGram ? "prototype_gram" : "weight_correlation";
}

DiversityVariant parse_diversity(std::string_view text) {
  if (text == "prototype_gram") return DiversityVariant::PrototypeGram;
  if (text == "weight_correlation") return DiversityVariant::WeightCorrelation;
  throw ConfigurationError("unknown diversity variant '" + std::string(text) +
                           "' (expected prototype_gram or weight_correlation)");
}

// ---------------------------------------------------------------------------
// Prompt-guided pooling

PoolingResult prompt_guided_pool(const Matrix& Z, const Matrix& P) {
  require_bag(Z, "prompt_guided_pool");
  if (P.rows() == 0) throw ContractViolation("prompt_guided_pool: no prototypes");
  if (Z.cols() != P.cols()) {
    throw ContractViolation("prompt_guided_pool: feature width " + std::to_string(Z.cols()) +
                            " vs prototype width " + std::to_string(P.cols()));
  }
  PoolingResult out;
  out.W = softmax_columns(matmul_transposed(Z, P));
  const Vector coeff = instance_coefficients(out.W);
  out.F.assign(Z.cols(), 0.0);
  for (std::size_t j = 0; j < Z.rows(); ++j) {
    auto z = Z.row(j);
    for (std::size_t c = 0; c < Z.cols(); ++c) out.F[c] += coeff[j] * z[c];
  }
  return out;
}

Vector instance_coefficients(const Matrix& W) {
  Vector coeff(W.rows(), 0.0);
  const double inv = 1.0 / static_cast<double>(W.cols());
  for (std::size_t j = 0; j < W.rows(); ++j) {
    double s = 0.0;
    for (double v : W.row(j)) s += v;
    coeff[j] = s * inv;
  }
  return coeff;
}

Matrix prompt_guided_pool_backward(const Matrix& Z, const PoolingResult& forward,
                                   std::span<const double> dF, const Matrix& extra_dW) {
  const std::size_t n = Z.rows();
  const std::size_t np = forward.W.cols();
  Matrix dW(n, np);
  const double inv = 1.0 / static_cast<double>(np);
  for (std::size_t j = 0; j < n; ++j) {
    const double g = dot(Z.row(j), dF) * inv;
    for (std::size_t k = 0; k < np; ++k) dW(j, k) = g;
  }
  if (!extra_dW.empty()) {
    for (std::size_t i = 0; i < dW.data().size(); ++i) dW.data()[i] += extra_dW.data()[i];
  }
  const Matrix dScores = softmax_columns_backward(forward.W, dW);
  // scores = Z P^T  =>  dP = dScores^T Z
  Matrix dP(np, Z.cols());
  for (std::size_t j = 0; j < n; ++j) {
    auto z = Z.row(j);
    for (std::size_t k = 0; k < np; ++k) {
      const double g = dScores(j, k);
      auto out = dP.row(k);
      for (std::size_t c = 0; c < z.size(); ++c) out[c] += g * z[c];
    }
  }
  return dP;
}

// ---------------------------------------------------------------------------
// Baselines

Vector mean_pool(const Matrix& Z) {
  require_bag(Z, "mean_pool");
  Vector F(Z.cols(), 0.0);
  for (std::size_t j = 0; j < Z.rows(); ++j) {
    auto z = Z.row(j);
    for (std::size_t c = 0; c < F.size(); ++c) F[c] += z[c];
  }
  for (double& v : F) v /= static_cast<double>(Z.rows());
  return F;
}

Vector max_pool(const Matrix& Z) {
  require_bag(Z, "max_pool");
  Vector F(Z.row(0).begin(), Z.row(0).end());
  for (std::size_t j = 1; j < Z.rows(); ++j) {
    auto z = Z.row(j);
    for (std::size_t c = 0; c < F.size(); ++c) F[c] = std::max(F[c], z[c]);
  }
  return F;
}

AttentionParams AttentionParams::init(std::size_t feature_dim, std::size_t attention_dim, Rng& rng) {
  if (attention_dim == 0) throw ConfigurationError("attention dimension must be at least 1");
  AttentionParams p;
  p.V = Matrix(attention_dim, feature_dim);
  rng.fill_uniform(p.V.data(), -0.05, 0.05);
  p.w.resize(attention_dim);
  rng.fill_uniform(p.w, -0.05, 0.05);
  return p;
}

AttentionResult attention_pool(const Matrix& Z, const AttentionParams& params) {
  require_bag(Z, "attention_pool");
  if (params.V.cols() != Z.cols() || params.V.rows() != params.w.size()) {
    throw ContractViolation("attention_pool: parameter shapes do not match feature width " +
                            std::to_string(Z.cols()));
  }
  AttentionResult out;
  out.hidden = matmul_transposed(Z, params.V);
  for (double& h : out.hidden.data()) h = std::tanh(h);
  Vector logits(Z.rows());
  for (std::size_t j = 0; j < Z.rows(); ++j) logits[j] = dot(out.hidden.row(j), params.w);
  out.weights = softmax(logits);
  out.F.assign(Z.cols(), 0.0);
  for (std::size_t j = 0; j < Z.rows(); ++j) {
    auto z = Z.row(j);
    for (std::size_t c = 0; c < Z.cols(); ++c) out.F[c] += out.weights[j] * z[c];
  }
  return out;
}

AttentionGrads attention_pool_backward(const Matrix& Z, const AttentionParams& params,
                                       const AttentionResult& forward, std::span<const double> dF) {
  const std::size_t n = Z.rows();
  Vector da(n);
  for (std::size_t j = 0; j < n; ++j) da[j] = dot(Z.row(j), dF);
  double inner = 0.0;
  for (std::size_t j = 0; j < n; ++j) inner += forward.weights[j] * da[j];

  AttentionGrads g{Matrix(params.V.rows(), params.V.cols()), Vector(params.w.size(), 0.0)};
  for (std::size_t j = 0; j < n; ++j) {
    const double de = forward.weights[j] * (da[j] - inner);
    if (de == 0.0) continue;
    auto h = forward.hidden.row(j);
    auto z = Z.row(j);
    for (std::size_t d = 0; d < h.size(); ++d) {
      g.dw[d] += de * h[d];
      const double dpre = de * params.w[d] * (1.0 - h[d] * h[d]);
      auto dv = g.dV.row(d);
      for (std::size_t c = 0; c < z.size(); ++c) dv[c] += dpre * z[c];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Diversity penalties

double diversity_loss(const Matrix& P) {
  const std::size_t np = P.rows();
  if (np < 2) throw ContractViolation("diversity_loss needs at least two prototypes");
  double s = 0.0;
  for (std::size_t k = 0; k < np; ++k)
    for (std::size_t l = k + 1; l < np; ++l) s += dot(P.row(k), P.row(l));
  return 2.0 * s / static_cast<double>(np * (np - 1));
}

Matrix diversity_loss_backward(const Matrix& P) {
  const std::size_t np = P.rows();
  if (np < 2) throw ContractViolation("diversity_loss needs at least two prototypes");
  Vector total(P.cols(), 0.0);
  for (std::size_t k = 0; k < np; ++k)
    for (std::size_t c = 0; c < P.cols(); ++c) total[c] += P(k, c);
  const double scale = 2.0 / static_cast<double>(np * (np - 1));
  Matrix dP(np, P.cols());
  for (std::size_t k = 0; k < np; ++k)
    for (std::size_t c = 0; c < P.cols(); ++c) dP(k, c) = scale * (total[c] - P(k, c));
  return dP;
}

namespace {

Matrix normalized_columns(const Matrix& W, Vector& norms) {
  Matrix out(W.rows(), W.cols());
  norms.assign(W.cols(), 0.0);
  for (std::size_t k = 0; k < W.cols(); ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < W.rows(); ++j) s += W(j, k) * W(j, k);
    norms[k] = std::sqrt(s);
    if (!(norms[k] > 0.0)) throw DegenerateInput("weight column with zero norm");
    for (std::size_t j = 0; j < W.rows(); ++j) out(j, k) = W(j, k) / norms[k];
  }
  return out;
}

}  // namespace

double weight_correlation_loss(const Matrix& W) {
  const std::size_t np = W.cols();
  if (np < 2) throw ContractViolation("weight_correlation_loss needs at least two prototypes");
  Vector norms;
  const Matrix U = normalized_columns(W, norms);
  double s = 0.0;
  for (std::size_t k = 0; k < np; ++k)
    for (std::size_t l = k + 1; l < np; ++l)
      for (std::size_t j = 0; j < U.rows(); ++j) s += U(j, k) * U(j, l);
  return 2.0 * s / static_cast<double>(np * (np - 1));
}

Matrix weight_correlation_loss_backward(const Matrix& W) {
  const std::size_t np = W.cols();
  if (np < 2) throw ContractViolation("weight_correlation_loss needs at least two prototypes");
  Vector norms;
  const Matrix U = normalized_columns(W, norms);
  const double scale = 2.0 / static_cast<double>(np * (np - 1));
  Vector row_total(W.rows(), 0.0);
  for (std::size_t j = 0; j < W.rows(); ++j)
    for (std::size_t k = 0; k < np; ++k) row_total[j] += U(j, k);

  Matrix dW(W.rows(), np);
  for (std::size_t k = 0; k < np; ++k) {
    // gradient w.r.t. the unit column, then through the normalization
    double along = 0.0;
    Vector dU(W.rows());
    for (std::size_t j = 0; j < W.rows(); ++j) {
      dU[j] = scale * (row_total[j] - U(j, k));
      along += dU[j] * U(j, k);
    }
    for (std::size_t j = 0; j < W.rows(); ++j) dW(j, k) = (dU[j] - along * U(j, k)) / norms[k];
  }
  return dW;
}

}  // namespace topmil
