// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "topmil/numerics.hpp"

namespace topmil {

class Rng;

using TokenId = std::uint32_t;

inline constexpr std::size_t kDefaultWordDim = 512;
inline constexpr double kInitRange = 0.05;

enum class PromptLevel { Instance, Bag };
enum class Polarity { Positive, Negative, NotApplicable };

std::string_view to_string(PromptLevel level) noexcept;
std::string_view to_string(Polarity polarity) noexcept;

/// Lower-cased whitespace tokenization.
std::vector<std::string> tokenize(std::string_view text);

/// Word -> embedding table. Each word's embedding is a pure function of
/// (seed, word), so the table contents do not depend on insertion order.
class Vocabulary {
 public:
  explicit Vocabulary(std::uint64_t seed, std::size_t word_dim = kDefaultWordDim);

  /// Adds `word` if absent and returns its id. Throws once frozen.
  TokenId add(std::string_view word);
  void add_all(std::span<const std::string> words);

  std::optional<TokenId> find(std::string_view word) const;
  /// Throws VocabularyError naming the word when it is missing.
  TokenId id(std::string_view word) const;

  std::span<const double> embedding(TokenId id) const;
  const std::string& word(TokenId id) const { return words_.at(id); }

  std::size_t size() const noexcept { return words_.size(); }
  std::size_t word_dim() const noexcept { return word_dim_; }
  std::uint64_t seed() const noexcept { return seed_; }

  void freeze() noexcept { frozen_ = true; }
  bool frozen() const noexcept { return frozen_; }

  std::uint64_t fingerprint() const;

 private:
  std::uint64_t seed_;
  std::size_t word_dim_;
  bool frozen_ = false;
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> ids_;
  std::vector<double> table_;
};

enum class EncoderKind { ToyProjection, Precomputed };

/// A frozen encoder tower. The toy kind is a fixed linear projection
/// (feature_dim x input_dim) followed by L2 normalization; the precomputed kind
/// only normalizes features that were extracted elsewhere.
struct EncoderSpec {
  EncoderKind kind = EncoderKind::Precomputed;
  std::size_t input_dim = 0;
  std::size_t feature_dim = 0;
  std::uint64_t seed = 0;
  Matrix projection;

  static EncoderSpec toy(std::size_t input_dim, std::size_t feature_dim, std::uint64_t seed);
  static EncoderSpec precomputed(std::size_t feature_dim);

  std::uint64_t fingerprint() const;
};

/// Learnable context tokens followed by the fixed description and class
/// template words.
struct PromptGroup {
  PromptLevel level = PromptLevel::Instance;
  std::string tag;
  Polarity polarity = Polarity::NotApplicable;
  Matrix learnable;  // M x word_dim
  std::vector<std::string> descriptive_tokens;
  std::vector<std::string> class_tokens;

  std::size_t context_length() const noexcept { return learnable.rows(); }
  std::size_t sequence_length() const noexcept {
    return learnable.rows() + descriptive_tokens.size() + class_tokens.size();
  }
};

/// Digest of everything in a group except the learnable matrix.
std::uint64_t fixed_fingerprint(const PromptGroup& group);

/// Learnable context with entries uniform in [-0.05, 0.05].
Matrix init_context(std::size_t context_length, std::size_t word_dim, Rng& rng);

/// Rows: [learnable][descriptive][class].
Matrix assemble_prompt(const PromptGroup& group, const Vocabulary& vocab);

/// Forward state of the toy text encoder kept for the backward pass.
struct TextEncoding {
  Vector feature;     // unit norm, length m
  Vector projected;   // projection * mean(sequence), before normalization
  double projected_norm = 0.0;
  std::size_t length = 0;
};

TextEncoding encode_text_detailed(const Matrix& sequence, const EncoderSpec& encoder);
Vector encode_text(const Matrix& sequence, const EncoderSpec& encoder);

/// Gradient of a loss with respect to one row of the encoded sequence, given
/// the gradient with respect to the unit feature. The encoder mean-pools over
/// positions, so every position receives this same vector.
Vector encode_text_backward(const TextEncoding& forward, std::span<const double> grad_feature,
                            const EncoderSpec& encoder);

Vector encode_image(std::span<const double> raw, const EncoderSpec& encoder);
/// Row-wise encode_image over an instance matrix.
Matrix encode_images(const Matrix& raw, const EncoderSpec& encoder);

/// Rows of P with tags and polarities carried from the groups.
struct PrototypeSet {
  Matrix P;
  std::vector<std::string> tags;
  std::vector<Polarity> polarities;

  std::size_t size() const noexcept { return P.rows(); }
  std::size_t count_positive() const noexcept;
};

/// Encodes each group to a unit feature row. `forwards`, when non-null,
/// receives the per-row encoder state for backpropagation.
Matrix encode_groups(std::span<const PromptGroup> groups, const Vocabulary& vocab,
                     const EncoderSpec& encoder, std::vector<TextEncoding>* forwards = nullptr);

PrototypeSet build_prototypes(std::span<const PromptGroup> groups, const Vocabulary& vocab,
                              const EncoderSpec& encoder,
                              std::vector<TextEncoding>* forwards = nullptr);

/// Pushes per-row feature gradients back into each group's learnable rows,
/// accumulating into `grad_contexts[i]` (shaped like groups[i].learnable).
void backprop_to_contexts(std::span<const TextEncoding> forwards, const Matrix& grad_features,
                          const EncoderSpec& encoder, std::span<Matrix> grad_contexts);

}  // namespace topmil
