// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "topmil/datagen.hpp"
#include "topmil/fewshot.hpp"

namespace topmil {

// Run configuration file: one `key = value` per line, `#` starts a comment.
//
//   task            = synthetic_tumor
//   embeddings      = data/synthetic.topemb
//   prompts         = prompts/synthetic_benchmark
//   out             = runs/synthetic
//   shots           = 1,2,4,8,16
//   pooler          = prompt_guided
//   bag_prompt_mode = full
//   lambda          = 0.1
//
// Relative paths resolve against the directory holding the config file.
// Every key has a default except the paths; see kRunConfigKeys.
struct RunConfig {
  std::string task = "topmil";
  std::filesystem::path embeddings;
  std::filesystem::path prompts;
  std::filesystem::path out = "topmil_out";
  std::vector<std::size_t> shots = {16};
  TrainConfig train;
  std::uint64_t encoder_seed = 0;
  std::size_t word_dim = kDefaultWordDim;
  std::size_t jobs = 1;
  SyntheticConfig synthetic;

  /// Source line of each key that was set from a file, for diagnostics.
  std::map<std::string, std::size_t> lines;
  std::string source;
};

/// Keys accepted in a config file, in echo order.
extern const std::vector<std::string_view> kRunConfigKeys;

/// Parses `text`. Unknown keys, duplicate keys and malformed values raise
/// ConfigurationError with "source:line:". Paths are not checked here.
RunConfig parse_run_config(std::string_view text, std::string_view source,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Checks that referenced inputs exist: the prompt directory always, the
/// embeddings archive when `need_embeddings`.
void check_input_paths(const RunConfig& cfg, bool need_embeddings);

/// Canonical `key = value` rendering of every key. Parsing the echo yields
/// the same configuration.
std::string echo_run_config(const RunConfig& cfg);

std::vector<std::size_t> parse_shot_list(std::string_view text);

}  // namespace topmil
