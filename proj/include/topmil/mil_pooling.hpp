// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "topmil/numerics.hpp"

namespace topmil {

class Rng;

enum class PoolerKind { PromptGuided, Attention, Mean, Max };

std::string_view to_string(PoolerKind kind) noexcept;
PoolerKind parse_pooler(std::string_view text);

/// W is n_i x n_p with every column summing to one; F is the bag feature.
struct PoolingResult {
  Matrix W;
  Vector F;
};

/// Prompt-guided pooling: W = column-softmax(Z P^T), F = mean_k (W^T Z)_k.
PoolingResult prompt_guided_pool(const Matrix& Z, const Matrix& P);

/// Per-instance convex weights c_j = mean_k W_jk, so that F = sum_j c_j z_j.
Vector instance_coefficients(const Matrix& W);

/// Backward of prompt_guided_pool with respect to P. `extra_dW` (may be
/// empty) is an additional gradient on W from terms other than F, such as the
/// weight-correlation diversity penalty.
Matrix prompt_guided_pool_backward(const Matrix& Z, const PoolingResult& forward,
                                   std::span<const double> dF, const Matrix& extra_dW = {});

Vector mean_pool(const Matrix& Z);
Vector max_pool(const Matrix& Z);

inline constexpr std::size_t kDefaultAttentionDim = 128;

/// Non-gated attention MIL: a_j ∝ exp(w^T tanh(V z_j)).
struct AttentionParams {
  Matrix V;  // d_att x m
  Vector w;  // d_att

  static AttentionParams init(std::size_t feature_dim, std::size_t attention_dim, Rng& rng);
  std::size_t attention_dim() const noexcept { return w.size(); }
};

struct AttentionResult {
  Vector weights;  // simplex over instances
  Vector F;
  Matrix hidden;   // tanh(V z_j) per row, kept for backward
};

AttentionResult attention_pool(const Matrix& Z, const AttentionParams& params);

struct AttentionGrads {
  Matrix dV;
  Vector dw;
};

AttentionGrads attention_pool_backward(const Matrix& Z, const AttentionParams& params,
                                       const AttentionResult& forward, std::span<const double> dF);

enum class DiversityVariant { PrototypeGram, WeightCorrelation };

std::string_view to_string(DiversityVariant v) noexcept;
DiversityVariant parse_diversity(std::string_view text);

/// Mean off-diagonal entry of P P^T (average pairwise prototype cosine).
double diversity_loss(const Matrix& P);
/// Gradient of diversity_loss with respect to P.
Matrix diversity_loss_backward(const Matrix& P);

/// Weight-correlation variant: mean off-diagonal cosine between the columns
/// of one bag's aggregation weights W.
double weight_correlation_loss(const Matrix& W);
Matrix weight_correlation_loss_backward(const Matrix& W);

}  // namespace topmil
