// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "topmil/numerics.hpp"

namespace topmil {

/// One bag: n_i instance feature rows, a class label and, when known, the
/// hidden instance labels (0 = negative, 1 = positive).
struct Bag {
  std::string id;
  Matrix features;
  std::size_t label = 0;
  std::optional<std::vector<std::uint8_t>> instance_labels;

  std::size_t size() const noexcept { return features.rows(); }
};

/// True when the instance labels obey the MIL rule: a bag is positive iff it
/// holds at least one positive instance. Bags without labels pass.
inline bool mil_label_consistent(const Bag& bag) {
  if (!bag.instance_labels) return true;
  if (bag.instance_labels->size() != bag.size()) return false;
  bool any_positive = false;
  for (auto v : *bag.instance_labels) any_positive = any_positive || v != 0;
  return any_positive == (bag.label != 0);
}

}  // namespace topmil
