// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#include "topmil/fewshot.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "topmil/datagen.hpp"
#include "topmil/errors.hpp"
#include "topmil/parallel.hpp"
#include "topmil/rng.hpp"

namespace topmil {
namespace {

constexpr std::uint64_t kVocabSalt = 0x766f63;
constexpr std::uint64_t kTextSalt = 0x747874;
constexpr std::uint64_t kInitSalt = 0x696e6974;

void add_into(std::span<double> dst, std::span<const double> src, double scale = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

bool uses_instance_prompts(const TrainConfig& cfg) { return cfg.pooler == PoolerKind::PromptGuided; }
bool uses_bag_prompts(const TrainConfig& cfg) { return cfg.head == BagHead::Prompt; }

}  // namespace

std::string_view to_string(BagPromptMode mode) noexcept {
  return mode == BagPromptMode::Full ? "full" : "learnable_only";
}

BagPromptMode parse_bag_prompt_mode(std::string_view text) {
  if (text == "full") return BagPromptMode::Full;
  if (text == "learnable_only" || text == "coop") return BagPromptMode::LearnableOnly;
  throw ConfigurationError("unknown bag prompt mode '" + std::string(text) +
                           "' (expected full or learnable_only)");
}

std::string_view to_string(BagHead head) noexcept {
  return head == BagHead::Prompt ? "prompt" : "linear_probe";
}

BagHead parse_bag_head(std::string_view text) {
  if (text == "prompt") return BagHead::Prompt;
  if (text == "linear_probe") return BagHead::LinearProbe;
  throw ConfigurationError("unknown bag head '" + std::string(text) +
                           "' (expected prompt or linear_probe)");
}

std::string method_name(PoolerKind pooler, BagPromptMode mode, BagHead head) {
  std::string pool;
  switch (pooler) {
    case PoolerKind::PromptGuided: pool = "Prompt guided pooling"; break;
    case PoolerKind::Attention: pool = "Attention-pooling"; break;
    case PoolerKind::Mean: pool = "Mean-pooling"; break;
    case PoolerKind::Max: pool = "Max-pooling"; break;
  }
  if (head == BagHead::LinearProbe) return "Linear-Probe (" + pool + ")";
  return std::string(mode == BagPromptMode::Full ? "Bag Prompt" : "CoOp") + "+" + pool;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { throw ConfigurationError("train config: " + what); };
  if (shots < 1) bad("shots must be at least 1");
  if (num_classes < 2) bad("need at least two classes");
  if (!(tau > 0.0)) bad("tau must be positive");
  // lr = 0 is accepted: it is the null-step configuration
  if (!(lr >= 0.0) || !std::isfinite(lr)) bad("lr must be finite and non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) bad("momentum must lie in [0, 1)");
  if (epochs < 1) bad("epochs must be at least 1");
  if (repeats < 1) bad("repeats must be at least 1");
  if (!(lambda_div >= 0.0) || !std::isfinite(lambda_div)) bad("lambda must be finite and non-negative");
  if (attention_dim < 1) bad("attention_dim must be at least 1");
  if (context_length < 1) bad("context_length must be at least 1");
}

// ---------------------------------------------------------------------------
// Model setup

std::uint64_t FrozenEncoders::fingerprint() const {
  return mix_seed(vocab.fingerprint(), text.fingerprint());
}

FrozenEncoders make_frozen_encoders(const PromptDirectory& prompts, std::size_t feature_dim,
                                    std::uint64_t encoder_seed, std::size_t word_dim) {
  FrozenEncoders enc{Vocabulary(mix_seed(encoder_seed, kVocabSalt), word_dim),
                     EncoderSpec::toy(word_dim, feature_dim, mix_seed(encoder_seed, kTextSalt))};
  register_words(prompts, enc.vocab);
  enc.vocab.freeze();
  return enc;
}

EpisodeModel init_model(const PromptDirectory& prompts, const FrozenEncoders& encoders,
                        const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (uses_instance_prompts(cfg) && prompts.instance.size() < 2) {
    throw ConfigurationError("prompt-guided pooling needs at least two instance-level prompt files");
  }
  if (uses_bag_prompts(cfg) && prompts.bag.size() != cfg.num_classes) {
    throw ConfigurationError("expected " + std::to_string(cfg.num_classes) +
                             " bag-level prompt files (one per class), found " +
                             std::to_string(prompts.bag.size()));
  }
  Rng rng(mix_seed(seed, kInitSalt));
  EpisodeModel model;
  for (const auto& d : prompts.instance)
    model.instance_groups.push_back(build_prompt_group(d, encoders.vocab, cfg.context_length, rng));
  const bool describe = cfg.bag_prompt_mode == BagPromptMode::Full;
  for (const auto& d : prompts.bag)
    model.bag_groups.push_back(build_prompt_group(d, encoders.vocab, cfg.context_length, rng, describe));
  model.attention = AttentionParams::init(encoders.text.feature_dim, cfg.attention_dim, rng);
  model.probe.weight = Matrix(cfg.num_classes, encoders.text.feature_dim);
  rng.fill_uniform(model.probe.weight.data(), -kInitRange, kInitRange);
  model.probe.bias.assign(cfg.num_classes, 0.0);
  return model;
}

EpisodeModel zeros_like(const EpisodeModel& model) {
  EpisodeModel z = model;
  for (auto* groups : {&z.instance_groups, &z.bag_groups})
    for (auto& g : *groups) std::ranges::fill(g.learnable.data(), 0.0);
  std::ranges::fill(z.attention.V.data(), 0.0);
  std::ranges::fill(z.attention.w, 0.0);
  std::ranges::fill(z.probe.weight.data(), 0.0);
  std::ranges::fill(z.probe.bias, 0.0);
  return z;
}

std::vector<std::span<double>> trainable_blocks(EpisodeModel& model, const TrainConfig& cfg) {
  std::vector<std::span<double>> blocks;
  if (uses_instance_prompts(cfg))
    for (auto& g : model.instance_groups) blocks.push_back(g.learnable.data());
  if (uses_bag_prompts(cfg))
    for (auto& g : model.bag_groups) blocks.push_back(g.learnable.data());
  if (cfg.pooler == PoolerKind::Attention) {
    blocks.push_back(model.attention.V.data());
    blocks.push_back(model.attention.w);
  }
  if (cfg.head == BagHead::LinearProbe) {
    blocks.push_back(model.probe.weight.data());
    blocks.push_back(model.probe.bias);
  }
  return blocks;
}

Vector flatten_trainable(const EpisodeModel& model, const TrainConfig& cfg) {
  EpisodeModel copy = model;
  Vector flat;
  for (auto block : trainable_blocks(copy, cfg)) flat.insert(flat.end(), block.begin(), block.end());
  return flat;
}

void assign_trainable(EpisodeModel& model, const TrainConfig& cfg, std::span<const double> flat) {
  std::size_t offset = 0;
  for (auto block : trainable_blocks(model, cfg)) {
    if (offset + block.size() > flat.size()) throw ContractViolation("parameter vector too short");
    std::ranges::copy(flat.subspan(offset, block.size()), block.begin());
    offset += block.size();
  }
  if (offset != flat.size()) throw ContractViolation("parameter vector too long");
}

std::uint64_t frozen_fingerprint(const EpisodeModel& model, const FrozenEncoders& encoders) {
  std::uint64_t h = encoders.fingerprint();
  for (const auto* groups : {&model.instance_groups, &model.bag_groups})
    for (const auto& g : *groups) h = mix_seed(h, fixed_fingerprint(g));
  return h;
}

// ---------------------------------------------------------------------------
// Inference primitives

BagClassWeights build_bag_class_weights(std::span<const PromptGroup> bag_groups,
                                        const Vocabulary& vocab, const EncoderSpec& encoder,
                                        std::vector<TextEncoding>* forwards) {
  if (bag_groups.size() < 2) throw ContractViolation("need at least two bag-level prompt groups");
  return BagClassWeights{encode_groups(bag_groups, vocab, encoder, forwards)};
}

ProbVector classify_bag(std::span<const double> F, const BagClassWeights& weights, double tau) {
  if (weights.B.rows() < 2) throw ContractViolation("classify_bag needs at least two classes");
  Vector sims(weights.B.rows());
  for (std::size_t k = 0; k < sims.size(); ++k) sims[k] = cosine(F, weights.B.row(k));
  return class_probabilities(sims, tau);
}

Vector instance_scores(const Matrix& Z, const PrototypeSet& prototypes) {
  const std::size_t positives = prototypes.count_positive();
  if (positives == 0) {
    throw ConfigurationError("instance scoring needs at least one positive-polarity prototype");
  }
  const PoolingResult pooled = prompt_guided_pool(Z, prototypes.P);
  Vector scores(Z.rows(), 0.0);
  for (std::size_t j = 0; j < Z.rows(); ++j) {
    for (std::size_t k = 0; k < prototypes.size(); ++k)
      if (prototypes.polarities[k] == Polarity::Positive) scores[j] += pooled.W(j, k);
    scores[j] /= static_cast<double>(positives);
  }
  return scores;
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ContractViolation("auc: scores and labels differ in length");
  std::size_t n_pos = 0;
  for (auto l : labels) n_pos += l != 0;
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DegenerateInput("auc needs both positive and negative labels");
  for (double s : scores)
    if (std::isnan(s)) throw ContractViolation("auc: NaN score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::ranges::sort(order, [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Ranks are 1-based; a tie block spanning ranks [lo, hi] gets (lo + hi) / 2.
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]]) positive_rank_sum += midrank;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

// ---------------------------------------------------------------------------
// Objective

ObjectiveValue objective(const EpisodeModel& model, const FrozenEncoders& encoders,
                         std::span<const Bag* const> batch, const TrainConfig& cfg,
                         EpisodeModel* grad) {
  if (batch.empty()) throw EpisodeError("objective over an empty batch");
  const bool pgp = uses_instance_prompts(cfg);
  const bool prompt_head = uses_bag_prompts(cfg);

  std::vector<TextEncoding> inst_fwd, bag_fwd;
  Matrix P, B;
  if (pgp) P = encode_groups(model.instance_groups, encoders.vocab, encoders.text, &inst_fwd);
  if (prompt_head) B = encode_groups(model.bag_groups, encoders.vocab, encoders.text, &bag_fwd);

  const bool weight_corr = pgp && cfg.diversity == DiversityVariant::WeightCorrelation;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  Matrix dP = pgp ? Matrix(P.rows(), P.cols()) : Matrix();
  Matrix dB = prompt_head ? Matrix(B.rows(), B.cols()) : Matrix();

  ObjectiveValue value;
  for (const Bag* bag : batch) {
    const Matrix& Z = bag->features;
    if (bag->label >= cfg.num_classes) {
      throw EpisodeError("bag " + bag->id + " label out of range for " +
                         std::to_string(cfg.num_classes) + " classes");
    }

    PoolingResult pooled;
    AttentionResult attended;
    Vector F;
    switch (cfg.pooler) {
      case PoolerKind::PromptGuided:
        pooled = prompt_guided_pool(Z, P);
        F = pooled.F;
        break;
      case PoolerKind::Attention:
        attended = attention_pool(Z, model.attention);
        F = attended.F;
        break;
      case PoolerKind::Mean: F = mean_pool(Z); break;
      case PoolerKind::Max: F = max_pool(Z); break;
    }

    Vector logits(cfg.num_classes);
    Vector unit_F;
    double f_norm = 0.0;
    if (prompt_head) {
      f_norm = norm(F);
      if (!(f_norm > 0.0)) throw DegenerateInput("bag " + bag->id + " pooled to a zero feature");
      unit_F = F;
      for (double& v : unit_F) v /= f_norm;
      for (std::size_t k = 0; k < logits.size(); ++k) logits[k] = dot(unit_F, B.row(k)) / cfg.tau;
    } else {
      for (std::size_t k = 0; k < logits.size(); ++k)
        logits[k] = dot(model.probe.weight.row(k), F) + model.probe.bias[k];
    }
    value.cross_entropy += cross_entropy_from_logits(logits, bag->label) * inv_batch;
    if (weight_corr) value.diversity += weight_correlation_loss(pooled.W) * inv_batch;

    if (!grad) continue;

    Vector dlogits = softmax(logits);
    dlogits[bag->label] -= 1.0;
    for (double& v : dlogits) v *= inv_batch;

    Vector dF(F.size(), 0.0);
    if (prompt_head) {
      Vector d_unit(F.size(), 0.0);
      for (std::size_t k = 0; k < logits.size(); ++k) {
        const double dcos = dlogits[k] / cfg.tau;
        add_into(dB.row(k), unit_F, dcos);
        add_into(d_unit, B.row(k), dcos);
      }
      const double along = dot(unit_F, d_unit);
      for (std::size_t c = 0; c < F.size(); ++c) dF[c] = (d_unit[c] - along * unit_F[c]) / f_norm;
    } else {
      for (std::size_t k = 0; k < logits.size(); ++k) {
        add_into(grad->probe.weight.row(k), F, dlogits[k]);
        grad->probe.bias[k] += dlogits[k];
        add_into(dF, model.probe.weight.row(k), dlogits[k]);
      }
    }

    switch (cfg.pooler) {
      case PoolerKind::PromptGuided: {
        Matrix extra;
        if (weight_corr) {
          extra = weight_correlation_loss_backward(pooled.W);
          for (double& v : extra.data()) v *= cfg.lambda_div * inv_batch;
        }
        const Matrix dPb = prompt_guided_pool_backward(Z, pooled, dF, extra);
        add_into(dP.data(), dPb.data());
        break;
      }
      case PoolerKind::Attention: {
        const AttentionGrads ag = attention_pool_backward(Z, model.attention, attended, dF);
        add_into(grad->attention.V.data(), ag.dV.data());
        add_into(grad->attention.w, ag.dw);
        break;
      }
      case PoolerKind::Mean:
      case PoolerKind::Max: break;
    }
  }

  if (pgp && cfg.diversity == DiversityVariant::PrototypeGram) {
    value.diversity = diversity_loss(P);
    if (grad) add_into(dP.data(), diversity_loss_backward(P).data(), cfg.lambda_div);
  }
  value.total = value.cross_entropy + cfg.lambda_div * value.diversity;

  if (grad) {
    if (pgp) {
      std::vector<Matrix> ctx;
      for (auto& g : grad->instance_groups) ctx.push_back(std::move(g.learnable));
      backprop_to_contexts(inst_fwd, dP, encoders.text, ctx);
      for (std::size_t i = 0; i < ctx.size(); ++i) grad->instance_groups[i].learnable = std::move(ctx[i]);
    }
    if (prompt_head) {
      std::vector<Matrix> ctx;
      for (auto& g : grad->bag_groups) ctx.push_back(std::move(g.learnable));
      backprop_to_contexts(bag_fwd, dB, encoders.text, ctx);
      for (std::size_t i = 0; i < ctx.size(); ++i) grad->bag_groups[i].learnable = std::move(ctx[i]);
    }
  }
  return value;
}

// ---------------------------------------------------------------------------
// Training and evaluation

TrainedEpisode train_episode(std::span<const Bag* const> support, EpisodeModel model,
                             const FrozenEncoders& encoders, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> per_class(cfg.num_classes, 0);
  for (const Bag* b : support) {
    if (b->label >= cfg.num_classes) {
      throw EpisodeError("support bag " + b->id + " has label " + std::to_string(b->label) +
                         " outside " + std::to_string(cfg.num_classes) + " classes");
    }
    ++per_class[b->label];
  }
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    if (per_class[c] != cfg.shots) {
      throw EpisodeError("support holds " + std::to_string(per_class[c]) + " bags of class " +
                         std::to_string(c) + ", expected " + std::to_string(cfg.shots));
    }
  }

  TrainedEpisode out;
  out.loss_history.reserve(cfg.epochs);
  EpisodeModel velocity = zeros_like(model);
  auto params = trainable_blocks(model, cfg);
  auto vel = trainable_blocks(velocity, cfg);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpisodeModel grad = zeros_like(model);
    ObjectiveValue v;
    try {
      v = objective(model, encoders, support, cfg, &grad);
    } catch (const DegenerateInput& e) {
      // After the first step a collapsed encoding means the parameters blew up.
      if (epoch == 0) throw;
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (!std::isfinite(v.total)) {
      throw DivergenceError("objective became non-finite at epoch " + std::to_string(epoch));
    }
    out.loss_history.push_back(v.total);
    if (cfg.lr == 0.0) continue;
    auto grads = trainable_blocks(grad, cfg);
    for (std::size_t b = 0; b < params.size(); ++b) {
      for (std::size_t i = 0; i < params[b].size(); ++i) {
        vel[b][i] = cfg.momentum * vel[b][i] + grads[b][i];
        params[b][i] -= cfg.lr * vel[b][i];
      }
    }
  }
  out.model = std::move(model);
  return out;
}

EvalMetrics evaluate(std::span<const Bag* const> test, const EpisodeModel& model,
                     const FrozenEncoders& encoders, const TrainConfig& cfg) {
  const bool pgp = uses_instance_prompts(cfg);
  const bool prompt_head = uses_bag_prompts(cfg);
  PrototypeSet prototypes;
  BagClassWeights weights;
  if (pgp) prototypes = build_prototypes(model.instance_groups, encoders.vocab, encoders.text);
  if (prompt_head) weights = build_bag_class_weights(model.bag_groups, encoders.vocab, encoders.text);

  EvalMetrics out;
  std::vector<std::uint8_t> bag_labels;
  Vector inst_scores;
  std::vector<std::uint8_t> inst_labels;
  const bool score_instances = cfg.pooler == PoolerKind::PromptGuided || cfg.pooler == PoolerKind::Attention;

  for (const Bag* bag : test) {
    Vector F;
    Vector weights_j;
    switch (cfg.pooler) {
      case PoolerKind::PromptGuided: F = prompt_guided_pool(bag->features, prototypes.P).F; break;
      case PoolerKind::Attention: {
        AttentionResult a = attention_pool(bag->features, model.attention);
        F = std::move(a.F);
        weights_j = std::move(a.weights);
        break;
      }
      case PoolerKind::Mean: F = mean_pool(bag->features); break;
      case PoolerKind::Max: F = max_pool(bag->features); break;
    }
    ProbVector p;
    if (prompt_head) {
      p = classify_bag(F, weights, cfg.tau);
    } else {
      Vector logits(cfg.num_classes);
      for (std::size_t k = 0; k < logits.size(); ++k)
        logits[k] = dot(model.probe.weight.row(k), F) + model.probe.bias[k];
      p = ProbVector{softmax(logits)};
    }
    out.bag_scores.push_back(p[1]);
    bag_labels.push_back(bag->label == 1 ? 1 : 0);

    if (score_instances && bag->instance_labels) {
      const Vector s = pgp ? instance_scores(bag->features, prototypes) : weights_j;
      inst_scores.insert(inst_scores.end(), s.begin(), s.end());
      inst_labels.insert(inst_labels.end(), bag->instance_labels->begin(), bag->instance_labels->end());
    }
  }
  out.bag_auc = auc(out.bag_scores, bag_labels);
  const auto positives = std::ranges::count_if(inst_labels, [](auto l) { return l != 0; });
  if (positives > 0 && positives < static_cast<std::ptrdiff_t>(inst_labels.size())) {
    out.instance_auc = auc(inst_scores, inst_labels);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Protocol

std::uint64_t repeat_seed(const TrainConfig& cfg, std::size_t repeat) {
  return cfg.fixed_support ? cfg.seed : cfg.seed + repeat;
}

RepeatMetrics run_repeat(std::span<const Bag> bags, const PromptDirectory& prompts,
                         const FrozenEncoders& encoders, const TrainConfig& cfg,
                         std::size_t repeat) {
  const std::uint64_t seed = repeat_seed(cfg, repeat);
  const Split split = few_shot_split(bags, cfg.num_classes, cfg.shots, seed, cfg.test_reserve);
  std::vector<const Bag*> support, test;
  for (auto i : split.support) support.push_back(&bags[i]);
  for (auto i : split.test) test.push_back(&bags[i]);

  TrainedEpisode trained = train_episode(support, init_model(prompts, encoders, cfg, seed), encoders, cfg);
  const EvalMetrics eval = evaluate(test, trained.model, encoders, cfg);

  RepeatMetrics m;
  m.repeat = repeat;
  m.seed = seed;
  m.bag_auc = eval.bag_auc;
  m.instance_auc = eval.instance_auc;
  m.loss_history = std::move(trained.loss_history);
  for (const Bag* b : support) m.support_ids.push_back(b->id);
  m.model = std::move(trained.model);
  return m;
}

StabilitySummary summarize(std::span<const RepeatMetrics> repeats) {
  if (repeats.empty()) throw ContractViolation("summarize: no repeats");
  StabilitySummary s;
  const double n = static_cast<double>(repeats.size());
  // Means are accumulated as offsets from the first repeat so identical
  // repeats give exactly zero spread.
  const double bag0 = repeats[0].bag_auc;
  double offset = 0.0;
  for (std::size_t r = 0; r < repeats.size(); ++r) {
    if (r == 0 || repeats[r].bag_auc > s.best_bag_auc) {
      s.best_bag_auc = repeats[r].bag_auc;
      s.best_repeat = r;
    }
    offset += repeats[r].bag_auc - bag0;
  }
  s.mean_bag_auc = bag0 + offset / n;
  double var = 0.0;
  for (const auto& r : repeats) var += (r.bag_auc - s.mean_bag_auc) * (r.bag_auc - s.mean_bag_auc) / n;
  s.std_bag_auc = std::sqrt(var);
  s.instance_auc_at_best = repeats[s.best_repeat].instance_auc;

  const bool all_instance = std::ranges::all_of(repeats, [](const auto& r) { return r.instance_auc.has_value(); });
  if (all_instance) {
    const double inst0 = *repeats[0].instance_auc;
    double ioffset = 0.0, best = 0.0;
    for (const auto& r : repeats) {
      ioffset += *r.instance_auc - inst0;
      best = std::max(best, *r.instance_auc);
    }
    const double mean = inst0 + ioffset / n;
    double ivar = 0.0;
    for (const auto& r : repeats) ivar += (*r.instance_auc - mean) * (*r.instance_auc - mean) / n;
    s.mean_instance_auc = mean;
    s.std_instance_auc = std::sqrt(ivar);
    s.best_instance_auc = best;
  }
  return s;
}

EpisodeResult stability_run(std::span<const Bag> bags, const PromptDirectory& prompts,
                            const FrozenEncoders& encoders, const TrainConfig& cfg,
                            std::size_t jobs) {
  cfg.validate();
  EpisodeResult result;
  result.config = cfg;
  result.repeats.resize(cfg.repeats);
  parallel_for(cfg.repeats, jobs, [&](std::size_t r) {
    result.repeats[r] = run_repeat(bags, prompts, encoders, cfg, r);
  });
  result.summary = summarize(result.repeats);
  return result;
}

}  // namespace topmil
