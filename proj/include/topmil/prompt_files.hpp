// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "topmil/prompt_model.hpp"

namespace topmil {

// Prompt description file (UTF-8):
//
//   level=instance; tag=Lymphocytes; polarity=negative
//   an image patch of [CLASS]
//   free-text visual description, any number of lines
//
// Bag-level files use polarity=n/a. Within a directory, bag-level files are
// assigned class indices in lexicographic filename order.
struct PromptDescription {
  PromptLevel level = PromptLevel::Instance;
  std::string tag;
  Polarity polarity = Polarity::NotApplicable;
  std::string class_template;  // contains "[CLASS]"
  std::string description;
  std::string source;

  /// Class template with the placeholder replaced by the tag.
  std::string class_text() const;
};

inline constexpr std::string_view kClassPlaceholder = "[CLASS]";

/// Throws FormatError with `source:line` on malformed input.
PromptDescription parse_prompt_description(std::string_view text, std::string_view source);
PromptDescription load_prompt_description(const std::filesystem::path& path);

struct PromptDirectory {
  std::vector<PromptDescription> instance;
  std::vector<PromptDescription> bag;  // index == class id
};

/// Loads every *.txt file in `dir`, sorted by filename.
PromptDirectory load_prompt_directory(const std::filesystem::path& dir);

/// Registers all words of the description in `vocab` (out-of-vocabulary words
/// get their seeded embeddings here) and builds the group with a freshly
/// initialized context of `context_length` tokens drawn from `rng`.
PromptGroup make_prompt_group(const PromptDescription& desc, Vocabulary& vocab,
                              std::size_t context_length, Rng& rng,
                              bool include_description = true);

/// Like make_prompt_group but against a vocabulary that already holds every
/// word; a missing word raises VocabularyError naming it.
PromptGroup build_prompt_group(const PromptDescription& desc, const Vocabulary& vocab,
                               std::size_t context_length, Rng& rng,
                               bool include_description = true);

/// Adds every word of every description to `vocab`.
void register_words(const PromptDirectory& prompts, Vocabulary& vocab);

}  // namespace topmil
