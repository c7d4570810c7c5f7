// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "topmil/fewshot.hpp"

namespace topmil {

/// One stability_run result tagged with the method that produced it.
struct ResultBlock {
  std::string method;
  std::size_t shots = 0;
  EpisodeResult episode;
};

inline constexpr std::string_view kResultsCsvHeader =
    "task,method,shots,repeat,seed,bag_auc,instance_auc,final_loss";

/// results.json: per-repeat metrics, best, mean and STD for every block plus
/// the config echo text.
std::string results_json(std::string_view task, const std::vector<ResultBlock>& blocks,
                         std::string_view config_echo);

/// results.csv: one row per repeat x shot x method. Missing instance AUC is
/// an empty cell.
std::string results_csv(std::string_view task, const std::vector<ResultBlock>& blocks);

/// prompts.snapshot: learnable parameters and support ids of the best repeat
/// of every block.
std::string snapshot_json(const std::vector<ResultBlock>& blocks, std::string_view config_echo);

struct SnapshotEntry {
  std::string method;
  PoolerKind pooler = PoolerKind::PromptGuided;
  BagPromptMode bag_prompt_mode = BagPromptMode::Full;
  BagHead head = BagHead::Prompt;
  std::size_t shots = 0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> support_ids;
  std::vector<Matrix> instance_contexts;
  std::vector<Matrix> bag_contexts;
  AttentionParams attention;
  LinearProbe probe;
};

std::vector<SnapshotEntry> parse_snapshot(std::string_view text, std::string_view source);

/// Copies snapshot parameters into a model built from the same prompt
/// directory. Shape mismatches raise FormatError.
void load_snapshot_into(const SnapshotEntry& entry, EpisodeModel& model);

/// Fixed-precision number for tables ("0.9312").
std::string format_metric(double v);

}  // namespace topmil
