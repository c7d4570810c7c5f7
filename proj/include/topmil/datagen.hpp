// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "topmil/bag.hpp"
#include "topmil/numerics.hpp"

namespace topmil {

/// Seeded phenotype-cluster MIL benchmark.
struct SyntheticConfig {
  std::size_t feature_dim = 64;
  std::size_t phenotypes = 6;
  std::vector<std::size_t> positive_phenotypes = {0, 1};
  double sigma = 0.15;          // per-coordinate Gaussian noise
  double witness_rate = 0.1;    // fraction of positive instances in positive bags
  std::size_t bag_size_min = 32;
  std::size_t bag_size_max = 48;
  std::size_t bags_per_class = 100;
  std::uint64_t seed = 0;

  /// Throws ConfigurationError on an invalid configuration.
  void validate() const;
};

struct SyntheticDataset {
  SyntheticConfig config;
  Matrix centers;  // phenotypes x feature_dim, orthonormal rows
  std::vector<Bag> bags;
  /// Phenotype index of every instance, parallel to bags[i].features rows.
  std::vector<std::vector<std::size_t>> phenotype_of;
};

/// Orthonormal cluster centers: Gram-Schmidt over seeded Gaussian draws.
Matrix make_centers(std::size_t phenotypes, std::size_t feature_dim, std::uint64_t seed);

/// Negative bags draw only negative phenotypes; positive bags place
/// ceil(witness_rate * n_i) (at least one) positive-phenotype instances at
/// random positions. Instances are unit-norm. Negative bags come first.
SyntheticDataset generate(const SyntheticConfig& cfg);

/// Throws ContractViolation naming the first bag that breaks the MIL label rule.
void audit_labels(std::span<const Bag> bags);

inline constexpr std::size_t kDefaultTestReserve = 50;

struct Split {
  std::vector<std::size_t> support;  // indices into the bag list
  std::vector<std::size_t> test;
};

/// Stratified split without replacement: `shots` bags of every class go to the
/// support set (class order, then draw order) and every other bag goes to
/// test. Each class must hold at least shots + test_reserve bags.
Split few_shot_split(std::span<const Bag> bags, std::size_t num_classes, std::size_t shots,
                     std::uint64_t seed, std::size_t test_reserve = kDefaultTestReserve);

Split few_shot_split(const SyntheticDataset& ds, std::size_t shots, std::uint64_t seed,
                     std::size_t test_reserve = kDefaultTestReserve);

}  // namespace topmil
