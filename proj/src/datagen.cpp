// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#include "topmil/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "topmil/errors.hpp"
#include "topmil/rng.hpp"

namespace topmil {
namespace {

constexpr std::uint64_t kCenterSalt = 0xC3;
constexpr std::uint64_t kBagSalt = 0xB1;

std::string bag_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "bag_%05zu", index);
  return buf;
}

}  // namespace

void SyntheticConfig::validate() const {
  auto bad = [](const std::string& what) { throw ConfigurationError("synthetic config: " + what); };
  if (feature_dim == 0) bad("feature_dim must be positive");
  if (phenotypes < 2) bad("need at least two phenotypes");
  if (phenotypes > feature_dim) bad("phenotypes cannot exceed feature_dim (centers are orthonormal)");
  if (positive_phenotypes.empty()) bad("positive phenotype subset is empty");
  if (positive_phenotypes.size() >= phenotypes) bad("positive phenotype subset must be a proper subset");
  std::vector<std::size_t> sorted = positive_phenotypes;
  std::ranges::sort(sorted);
  if (std::ranges::adjacent_find(sorted) != sorted.end()) bad("duplicate positive phenotype");
  if (sorted.back() >= phenotypes) bad("positive phenotype index out of range");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) bad("sigma must be finite and >= 0");
  if (!(witness_rate > 0.0 && witness_rate <= 1.0)) bad("witness_rate must lie in (0, 1]");
  if (bag_size_min == 0 || bag_size_min > bag_size_max) bad("bag size range must satisfy 1 <= min <= max");
  if (bags_per_class == 0) bad("bags_per_class must be positive");
}

Matrix make_centers(std::size_t phenotypes, std::size_t feature_dim, std::uint64_t seed) {
  if (phenotypes > feature_dim) {
    throw ConfigurationError("cannot draw " + std::to_string(phenotypes) +
                             " orthonormal centers in dimension " + std::to_string(feature_dim));
  }
  Rng rng(mix_seed(seed, kCenterSalt));
  Matrix centers(phenotypes, feature_dim);
  for (std::size_t k = 0; k < phenotypes; ++k) {
    auto row = centers.row(k);
    for (;;) {
      for (double& v : row) v = rng.normal();
      // two Gram-Schmidt passes keep the rows orthogonal to rounding error
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t prev = 0; prev < k; ++prev) {
          const double proj = dot(row, centers.row(prev));
          auto p = centers.row(prev);
          for (std::size_t c = 0; c < feature_dim; ++c) row[c] -= proj * p[c];
        }
      }
      const double n = norm(row);
      if (n > 1e-8) {
        for (double& v : row) v /= n;
        break;
      }
    }
  }
  return centers;
}

SyntheticDataset generate(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticDataset ds;
  ds.config = cfg;
  ds.centers = make_centers(cfg.phenotypes, cfg.feature_dim, cfg.seed);

  std::vector<std::size_t> positives = cfg.positive_phenotypes;
  std::ranges::sort(positives);
  std::vector<std::size_t> negatives;
  for (std::size_t k = 0; k < cfg.phenotypes; ++k)
    if (!std::ranges::binary_search(positives, k)) negatives.push_back(k);

  Rng rng(mix_seed(cfg.seed, kBagSalt));
  const std::size_t span = cfg.bag_size_max - cfg.bag_size_min + 1;
  for (std::size_t label = 0; label < 2; ++label) {
    for (std::size_t b = 0; b < cfg.bags_per_class; ++b) {
      const std::size_t n = cfg.bag_size_min + static_cast<std::size_t>(rng.below(span));
      std::vector<std::uint8_t> inst(n, 0);
      if (label == 1) {
        const double want = std::ceil(cfg.witness_rate * static_cast<double>(n) - 1e-9);
        const std::size_t witnesses = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, n);
        std::vector<std::size_t> slots(n);
        std::iota(slots.begin(), slots.end(), 0);
        rng.shuffle(slots);
        for (std::size_t i = 0; i < witnesses; ++i) inst[slots[i]] = 1;
      }

      Bag bag;
      bag.id = bag_name(ds.bags.size());
      bag.label = label;
      bag.features = Matrix(n, cfg.feature_dim);
      std::vector<std::size_t> phen(n);
      for (std::size_t j = 0; j < n; ++j) {
        const auto& pool = inst[j] ? positives : negatives;
        phen[j] = pool[rng.below(pool.size())];
        auto row = bag.features.row(j);
        auto center = ds.centers.row(phen[j]);
        if (cfg.sigma == 0.0) {
          std::ranges::copy(center, row.begin());
          continue;
        }
        for (std::size_t c = 0; c < cfg.feature_dim; ++c) row[c] = center[c] + cfg.sigma * rng.normal();
        const Vector unit = normalized(row);
        std::ranges::copy(unit, row.begin());
      }
      bag.instance_labels = std::move(inst);
      ds.bags.push_back(std::move(bag));
      ds.phenotype_of.push_back(std::move(phen));
    }
  }
  audit_labels(ds.bags);
  return ds;
}

void audit_labels(std::span<const Bag> bags) {
  for (const auto& bag : bags) {
    if (!mil_label_consistent(bag)) {
      throw ContractViolation("bag " + bag.id + " violates the MIL label rule (label " +
                              std::to_string(bag.label) + ")");
    }
  }
}

Split few_shot_split(std::span<const Bag> bags, std::size_t num_classes, std::size_t shots,
                     std::uint64_t seed, std::size_t test_reserve) {
  if (shots == 0) throw ConfigurationError("shots must be at least 1");
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < bags.size(); ++i) {
    if (bags[i].label >= num_classes) {
      throw ConfigurationError("bag " + bags[i].id + " has label " + std::to_string(bags[i].label) +
                               " but only " + std::to_string(num_classes) + " classes are configured");
    }
    by_class[bags[i].label].push_back(i);
  }

  Split split;
  std::vector<bool> in_support(bags.size(), false);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& members = by_class[c];
    if (members.size() < shots + test_reserve) {
      throw ConfigurationError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                               " bags; need " + std::to_string(shots) + " support + " +
                               std::to_string(test_reserve) + " test reserve");
    }
    Rng rng(mix_seed(seed, c));
    rng.shuffle(members);
    for (std::size_t s = 0; s < shots; ++s) {
      split.support.push_back(members[s]);
      in_support[members[s]] = true;
    }
  }
  for (std::size_t i = 0; i < bags.size(); ++i)
    if (!in_support[i]) split.test.push_back(i);
  return split;
}

Split few_shot_split(const SyntheticDataset& ds, std::size_t shots, std::uint64_t seed,
                     std::size_t test_reserve) {
  return few_shot_split(ds.bags, 2, shots, seed, test_reserve);
}

}  // namespace topmil
