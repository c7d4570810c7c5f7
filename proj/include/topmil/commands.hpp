// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "topmil/results.hpp"
#include "topmil/run_config.hpp"

namespace topmil {

/// Command-line flags that override the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::size_t>> shots;
  std::optional<std::string> pooler;
  std::optional<std::string> bag_prompt_mode;
  std::optional<double> lambda;
  std::optional<std::size_t> jobs;
  std::optional<std::filesystem::path> out;
};

void apply_overrides(RunConfig& cfg, const Overrides& overrides);

/// Ablation rows in table order.
struct AblationCell {
  PoolerKind pooler;
  BagPromptMode mode;
};
extern const std::vector<AblationCell> kAblationRows;

/// Shot columns of the ablation tables, widest first.
std::vector<std::size_t> ablation_columns(std::vector<std::size_t> shots);

/// Bag and instance ablation grids: header "Method,16-shot,...", one row per
/// kAblationRows entry, cells are best-of-repeats AUC. Instance cells are
/// empty where no instance labels exist.
std::string ablation_csv(const std::vector<ResultBlock>& blocks, const std::vector<std::size_t>& shots,
                         bool instance_level);

/// Loads the archive named by cfg.embeddings with L2-normalized features.
std::vector<Bag> load_bags(const RunConfig& cfg);

/// Every command writes config.echo into cfg.out and returns 0 on success;
/// failures surface as topmil::Error.
int cmd_gen(const RunConfig& cfg, std::ostream& log);
int cmd_train(const RunConfig& cfg, std::ostream& log);
int cmd_stability(const RunConfig& cfg, std::ostream& log);
int cmd_ablate(const RunConfig& cfg, std::ostream& log);
/// Scores a prompts.snapshot (default: cfg.out/prompts.snapshot) on the bags
/// outside each entry's support set; writes eval.json.
int cmd_eval(const RunConfig& cfg, const std::filesystem::path& snapshot, std::ostream& log);

/// stability_run for each configured shot with the configured method.
std::vector<ResultBlock> run_shots(const std::vector<Bag>& bags, const PromptDirectory& prompts,
                                   const RunConfig& cfg);

}  // namespace topmil
