// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "topmil/bag.hpp"
#include "topmil/mil_pooling.hpp"
#include "topmil/numerics.hpp"
#include "topmil/prompt_files.hpp"
#include "topmil/prompt_model.hpp"

namespace topmil {

/// Full = learnable context + description + class template. LearnableOnly
/// drops the description from bag-level prompts (the CoOp baseline).
enum class BagPromptMode { Full, LearnableOnly };
/// How a bag feature becomes class probabilities: text prompts or a linear layer.
enum class BagHead { Prompt, LinearProbe };

std::string_view to_string(BagPromptMode mode) noexcept;
BagPromptMode parse_bag_prompt_mode(std::string_view text);
std::string_view to_string(BagHead head) noexcept;
BagHead parse_bag_head(std::string_view text);

/// Display name used in result tables, e.g. "Bag Prompt+Prompt guided pooling"
/// or "Linear-Probe (Mean-pooling)".
std::string method_name(PoolerKind pooler, BagPromptMode mode, BagHead head);

inline constexpr std::size_t kAllowedShots[] = {1, 2, 4, 8, 16};

struct TrainConfig {
  std::size_t shots = 16;
  std::size_t num_classes = 2;
  double tau = 0.01;
  double lr = 0.002;
  double momentum = 0.9;
  std::size_t epochs = 200;
  double lambda_div = 0.1;
  std::size_t context_length = 10;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  PoolerKind pooler = PoolerKind::PromptGuided;
  BagPromptMode bag_prompt_mode = BagPromptMode::Full;
  BagHead head = BagHead::Prompt;
  DiversityVariant diversity = DiversityVariant::PrototypeGram;
  std::size_t attention_dim = kDefaultAttentionDim;
  std::size_t test_reserve = 50;
  /// Every repeat reuses `seed` (same support draw and initialization).
  bool fixed_support = false;

  void validate() const;
};

/// Frozen towers shared by every episode: the vocabulary (frozen once all
/// prompt words are registered) and the toy text encoder.
struct FrozenEncoders {
  Vocabulary vocab;
  EncoderSpec text;

  std::uint64_t fingerprint() const;
};

/// Builds and freezes the vocabulary/text encoder for a prompt directory.
FrozenEncoders make_frozen_encoders(const PromptDirectory& prompts, std::size_t feature_dim,
                                    std::uint64_t encoder_seed,
                                    std::size_t word_dim = kDefaultWordDim);

struct LinearProbe {
  Matrix weight;  // K x m
  Vector bias;    // K
};

/// Everything an episode can train. Which parts are active depends on the
/// pooler and head in TrainConfig.
struct EpisodeModel {
  std::vector<PromptGroup> instance_groups;
  std::vector<PromptGroup> bag_groups;
  AttentionParams attention;
  LinearProbe probe;
};

/// Fresh model for one episode. Initialization draws are made in a fixed
/// order regardless of the configured method, so every method sharing a seed
/// starts from the same contexts.
EpisodeModel init_model(const PromptDirectory& prompts, const FrozenEncoders& encoders,
                        const TrainConfig& cfg, std::uint64_t seed);

/// Same-shaped model filled with zeros, used as a gradient accumulator.
EpisodeModel zeros_like(const EpisodeModel& model);

/// Mutable views over the parameters that `cfg` trains, in a fixed order.
std::vector<std::span<double>> trainable_blocks(EpisodeModel& model, const TrainConfig& cfg);
Vector flatten_trainable(const EpisodeModel& model, const TrainConfig& cfg);
void assign_trainable(EpisodeModel& model, const TrainConfig& cfg, std::span<const double> flat);

/// Digest of all parameters that must stay frozen during training: the
/// encoders plus the fixed words of every prompt group.
std::uint64_t frozen_fingerprint(const EpisodeModel& model, const FrozenEncoders& encoders);

struct BagClassWeights {
  Matrix B;  // K x m, unit rows
};

BagClassWeights build_bag_class_weights(std::span<const PromptGroup> bag_groups,
                                        const Vocabulary& vocab, const EncoderSpec& encoder,
                                        std::vector<TextEncoding>* forwards = nullptr);

/// class_probabilities over cosine(F, B_k).
ProbVector classify_bag(std::span<const double> F, const BagClassWeights& weights, double tau);

/// score_j = mean over positive-polarity prototypes k of W_jk with
/// W = column-softmax(Z P^T).
Vector instance_scores(const Matrix& Z, const PrototypeSet& prototypes);

/// Probability that a random positive outranks a random negative, ties
/// counted one half (Mann-Whitney U with midranks).
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct ObjectiveValue {
  double cross_entropy = 0.0;  // mean over the batch
  double diversity = 0.0;      // unweighted penalty
  double total = 0.0;          // cross_entropy + lambda * diversity
};

/// Training objective over `batch`. When `grad` is non-null it must be shaped
/// like `model` (see zeros_like); gradients are accumulated into it.
ObjectiveValue objective(const EpisodeModel& model, const FrozenEncoders& encoders,
                         std::span<const Bag* const> batch, const TrainConfig& cfg,
                         EpisodeModel* grad = nullptr);

struct TrainedEpisode {
  EpisodeModel model;
  std::vector<double> loss_history;  // objective at the start of each epoch
};

/// Full-batch momentum SGD on the support set. Requires exactly cfg.shots
/// bags of every class.
TrainedEpisode train_episode(std::span<const Bag* const> support, EpisodeModel model,
                             const FrozenEncoders& encoders, const TrainConfig& cfg);

struct EvalMetrics {
  double bag_auc = 0.0;
  std::optional<double> instance_auc;
  Vector bag_scores;  // probability of class 1 per test bag
};

EvalMetrics evaluate(std::span<const Bag* const> test, const EpisodeModel& model,
                     const FrozenEncoders& encoders, const TrainConfig& cfg);

struct RepeatMetrics {
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  double bag_auc = 0.0;
  std::optional<double> instance_auc;
  std::vector<double> loss_history;
  std::vector<std::string> support_ids;
  EpisodeModel model;
};

struct StabilitySummary {
  std::size_t best_repeat = 0;     // selected by bag AUC, first wins ties
  double best_bag_auc = 0.0;
  std::optional<double> instance_auc_at_best;
  std::optional<double> best_instance_auc;
  double mean_bag_auc = 0.0;
  double std_bag_auc = 0.0;        // population standard deviation
  std::optional<double> mean_instance_auc;
  std::optional<double> std_instance_auc;
};

struct EpisodeResult {
  TrainConfig config;
  std::vector<RepeatMetrics> repeats;
  StabilitySummary summary;
};

StabilitySummary summarize(std::span<const RepeatMetrics> repeats);

/// Seed of repeat r: cfg.seed + r, or cfg.seed for every repeat when
/// cfg.fixed_support is set.
std::uint64_t repeat_seed(const TrainConfig& cfg, std::size_t repeat);

/// One full episode: split with the repeat seed, init, train, evaluate.
RepeatMetrics run_repeat(std::span<const Bag> bags, const PromptDirectory& prompts,
                         const FrozenEncoders& encoders, const TrainConfig& cfg,
                         std::size_t repeat);

/// cfg.repeats episodes with different support draws, plus best/mean/STD.
EpisodeResult stability_run(std::span<const Bag> bags, const PromptDirectory& prompts,
                            const FrozenEncoders& encoders, const TrainConfig& cfg,
                            std::size_t jobs = 1);

}  // namespace topmil
