// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#include "topmil/prompt_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "topmil/errors.hpp"
#include "topmil/rng.hpp"

namespace topmil {

std::string_view to_string(PromptLevel level) noexcept {
  return level == PromptLevel::Instance ? "instance" : "bag";
}

std::string_view to_string(Polarity polarity) noexcept {
  switch (polarity) {
    case Polarity::Positive: return "positive";
    case Polarity::Negative: return "negative";
    case Polarity::NotApplicable: return "n/a";
  }
  return "n/a";
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::uint64_t seed, std::size_t word_dim) : seed_(seed), word_dim_(word_dim) {
  if (word_dim == 0) throw ContractViolation("word embedding dimension must be positive");
}

TokenId Vocabulary::add(std::string_view word) {
  if (auto existing = find(word)) return *existing;
  if (frozen_) throw VocabularyError("vocabulary is frozen; cannot add '" + std::string(word) + "'");
  const auto id = static_cast<TokenId>(words_.size());
  words_.emplace_back(word);
  ids_.emplace(words_.back(), id);

  Rng rng(mix_seed(seed_, fnv1a(word)));
  const std::size_t offset = table_.size();
  table_.resize(offset + word_dim_);
  rng.fill_uniform(std::span(table_).subspan(offset, word_dim_), -kInitRange, kInitRange);
  return id;
}

void Vocabulary::add_all(std::span<const std::string> words) {
  for (const auto& w : words) add(w);
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  const auto it = ids_.find(std::string(word));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view word) const {
  if (auto found = find(word)) return *found;
  throw VocabularyError("unknown token '" + std::string(word) + "'");
}

std::span<const double> Vocabulary::embedding(TokenId id) const {
  if (id >= words_.size()) throw VocabularyError("token id " + std::to_string(id) + " out of range");
  return std::span(table_).subspan(static_cast<std::size_t>(id) * word_dim_, word_dim_);
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = fnv1a(std::to_string(seed_) + ":" + std::to_string(word_dim_));
  for (const auto& w : words_) h = fnv1a(w + '\n', h);
  return topmil::fingerprint(table_, h);
}

// ---------------------------------------------------------------------------
// Encoders

EncoderSpec EncoderSpec::toy(std::size_t input_dim, std::size_t feature_dim, std::uint64_t seed) {
  if (input_dim == 0 || feature_dim == 0) throw ContractViolation("encoder dimensions must be positive");
  EncoderSpec spec;
  spec.kind = EncoderKind::ToyProjection;
  spec.input_dim = input_dim;
  spec.feature_dim = feature_dim;
  spec.seed = seed;
  spec.projection = Matrix(feature_dim, input_dim);
  Rng rng(seed);
  rng.fill_uniform(spec.projection.data(), -kInitRange, kInitRange);
  return spec;
}

EncoderSpec EncoderSpec::precomputed(std::size_t feature_dim) {
  if (feature_dim == 0) throw ContractViolation("encoder dimensions must be positive");
  EncoderSpec spec;
  spec.kind = EncoderKind::Precomputed;
  spec.input_dim = feature_dim;
  spec.feature_dim = feature_dim;
  return spec;
}

std::uint64_t EncoderSpec::fingerprint() const {
  std::ostringstream header;
  header << static_cast<int>(kind) << ':' << input_dim << ':' << feature_dim << ':' << seed;
  return topmil::fingerprint(projection.data(), fnv1a(header.str()));
}

// ---------------------------------------------------------------------------
// Prompt groups

std::uint64_t fixed_fingerprint(const PromptGroup& group) {
  std::ostringstream out;
  out << to_string(group.level) << '|' << group.tag << '|' << to_string(group.polarity) << '|'
      << group.learnable.rows() << 'x' << group.learnable.cols() << '|';
  for (const auto& t : group.descriptive_tokens) out << t << ' ';
  out << '|';
  for (const auto& t : group.class_tokens) out << t << ' ';
  return fnv1a(out.str());
}

Matrix init_context(std::size_t context_length, std::size_t word_dim, Rng& rng) {
  Matrix ctx(context_length, word_dim);
  rng.fill_uniform(ctx.data(), -kInitRange, kInitRange);
  return ctx;
}

Matrix assemble_prompt(const PromptGroup& group, const Vocabulary& vocab) {
  const std::size_t dim = vocab.word_dim();
  if (!group.learnable.empty() && group.learnable.cols() != dim) {
    throw ContractViolation("learnable context width " + std::to_string(group.learnable.cols()) +
                            " does not match word dimension " + std::to_string(dim));
  }
  Matrix seq(group.sequence_length(), dim);
  std::size_t r = 0;
  for (std::size_t i = 0; i < group.learnable.rows(); ++i, ++r)
    std::ranges::copy(group.learnable.row(i), seq.row(r).begin());
  for (const auto* tokens : {&group.descriptive_tokens, &group.class_tokens}) {
    for (const auto& word : *tokens) {
      std::ranges::copy(vocab.embedding(vocab.id(word)), seq.row(r).begin());
      ++r;
    }
  }
  return seq;
}

TextEncoding encode_text_detailed(const Matrix& sequence, const EncoderSpec& encoder) {
  if (sequence.rows() == 0) throw DegenerateInput("cannot encode an empty token sequence");
  if (encoder.kind != EncoderKind::ToyProjection) {
    throw ContractViolation("text encoding requires a toy-projection encoder");
  }
  if (sequence.cols() != encoder.input_dim) {
    throw ContractViolation("token width " + std::to_string(sequence.cols()) +
                            " does not match text encoder input " +
                            std::to_string(encoder.input_dim));
  }
  Vector mean(sequence.cols(), 0.0);
  for (std::size_t r = 0; r < sequence.rows(); ++r) {
    auto row = sequence.row(r);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += row[c];
  }
  for (double& v : mean) v /= static_cast<double>(sequence.rows());

  TextEncoding out;
  out.length = sequence.rows();
  out.projected.resize(encoder.feature_dim);
  for (std::size_t i = 0; i < encoder.feature_dim; ++i)
    out.projected[i] = dot(encoder.projection.row(i), mean);
  out.projected_norm = norm(out.projected);
  if (!(out.projected_norm > 0.0) || !std::isfinite(out.projected_norm)) {
    throw DegenerateInput("text encoding collapsed to a zero vector");
  }
  out.feature = out.projected;
  for (double& v : out.feature) v /= out.projected_norm;
  return out;
}

Vector encode_text(const Matrix& sequence, const EncoderSpec& encoder) {
  return encode_text_detailed(sequence, encoder).feature;
}

Vector encode_text_backward(const TextEncoding& forward, std::span<const double> grad_feature,
                            const EncoderSpec& encoder) {
  // d(u/|u|)/du = (I - f f^T) / |u|
  const double along = dot(forward.feature, grad_feature);
  Vector grad_projected(grad_feature.size());
  for (std::size_t i = 0; i < grad_feature.size(); ++i)
    grad_projected[i] = (grad_feature[i] - along * forward.feature[i]) / forward.projected_norm;

  Vector grad_position(encoder.input_dim, 0.0);
  const double inv_len = 1.0 / static_cast<double>(forward.length);
  for (std::size_t i = 0; i < encoder.feature_dim; ++i) {
    const double g = grad_projected[i] * inv_len;
    if (g == 0.0) continue;
    auto proj_row = encoder.projection.row(i);
    for (std::size_t c = 0; c < encoder.input_dim; ++c) grad_position[c] += g * proj_row[c];
  }
  return grad_position;
}

Vector encode_image(std::span<const double> raw, const EncoderSpec& encoder) {
  if (raw.size() != encoder.input_dim) {
    throw ContractViolation("instance input has dimension " + std::to_string(raw.size()) +
                            ", encoder expects " + std::to_string(encoder.input_dim));
  }
  if (encoder.kind == EncoderKind::Precomputed) return normalized(raw);
  Vector projected(encoder.feature_dim);
  for (std::size_t i = 0; i < encoder.feature_dim; ++i)
    projected[i] = dot(encoder.projection.row(i), raw);
  return normalized(projected);
}

Matrix encode_images(const Matrix& raw, const EncoderSpec& encoder) {
  Matrix out(raw.rows(), encoder.feature_dim);
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    const Vector f = encode_image(raw.row(r), encoder);
    std::ranges::copy(f, out.row(r).begin());
  }
  return out;
}

std::size_t PrototypeSet::count_positive() const noexcept {
  return static_cast<std::size_t>(std::ranges::count(polarities, Polarity::Positive));
}

Matrix encode_groups(std::span<const PromptGroup> groups, const Vocabulary& vocab,
                     const EncoderSpec& encoder, std::vector<TextEncoding>* forwards) {
  Matrix features(groups.size(), encoder.feature_dim);
  if (forwards) {
    forwards->clear();
    forwards->reserve(groups.size());
  }
  for (std::size_t i = 0; i < groups.size(); ++i) {
    TextEncoding enc = encode_text_detailed(assemble_prompt(groups[i], vocab), encoder);
    std::ranges::copy(enc.feature, features.row(i).begin());
    if (forwards) forwards->push_back(std::move(enc));
  }
  return features;
}

PrototypeSet build_prototypes(std::span<const PromptGroup> groups, const Vocabulary& vocab,
                              const EncoderSpec& encoder, std::vector<TextEncoding>* forwards) {
  if (groups.size() < 2) {
    throw ContractViolation("at least two instance prompt groups are required, got " +
                            std::to_string(groups.size()));
  }
  PrototypeSet set;
  set.P = encode_groups(groups, vocab, encoder, forwards);
  for (const auto& g : groups) {
    set.tags.push_back(g.tag);
    set.polarities.push_back(g.polarity);
  }
  return set;
}

void backprop_to_contexts(std::span<const TextEncoding> forwards, const Matrix& grad_features,
                          const EncoderSpec& encoder, std::span<Matrix> grad_contexts) {
  for (std::size_t i = 0; i < forwards.size(); ++i) {
    Matrix& ctx = grad_contexts[i];
    if (ctx.rows() == 0) continue;
    const Vector g = encode_text_backward(forwards[i], grad_features.row(i), encoder);
    for (std::size_t r = 0; r < ctx.rows(); ++r) {
      auto row = ctx.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += g[c];
    }
  }
}

}  // namespace topmil
