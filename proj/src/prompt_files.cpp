// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#include "topmil/prompt_files.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "topmil/errors.hpp"
#include "topmil/rng.hpp"

namespace topmil {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void fail(std::string_view source, std::size_t line, const std::string& what) {
  throw FormatError(std::string(source) + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

std::string PromptDescription::class_text() const {
  std::string out = class_template;
  const auto pos = out.find(kClassPlaceholder);
  if (pos != std::string::npos) out.replace(pos, kClassPlaceholder.size(), tag);
  return out;
}

PromptDescription parse_prompt_description(std::string_view text, std::string_view source) {
  std::vector<std::string> lines;
  {
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) lines.push_back(line);
  }
  if (lines.size() < 2) fail(source, lines.size() + 1, "expected a header line and a class template line");

  PromptDescription desc;
  desc.source = std::string(source);
  bool has_level = false, has_tag = false, has_polarity = false;

  std::string header = lines[0];
  if (header.starts_with("\xEF\xBB\xBF")) header.erase(0, 3);
  std::istringstream fields(header);
  for (std::string field; std::getline(fields, field, ';');) {
    field = trim(field);
    if (field.empty()) continue;
    const auto eq = field.find('=');
    if (eq == std::string::npos) fail(source, 1, "header field '" + field + "' is not key=value");
    const std::string key = trim(std::string_view(field).substr(0, eq));
    const std::string value = trim(std::string_view(field).substr(eq + 1));
    if (key == "level") {
      if (value == "instance") desc.level = PromptLevel::Instance;
      else if (value == "bag") desc.level = PromptLevel::Bag;
      else fail(source, 1, "level must be instance or bag, got '" + value + "'");
      has_level = true;
    } else if (key == "tag") {
      if (value.empty()) fail(source, 1, "tag must not be empty");
      desc.tag = value;
      has_tag = true;
    } else if (key == "polarity") {
      if (value == "positive") desc.polarity = Polarity::Positive;
      else if (value == "negative") desc.polarity = Polarity::Negative;
      else if (value == "n/a") desc.polarity = Polarity::NotApplicable;
      else fail(source, 1, "polarity must be positive, negative or n/a, got '" + value + "'");
      has_polarity = true;
    } else {
      fail(source, 1, "unknown header key '" + key + "'");
    }
  }
  if (!has_level || !has_tag || !has_polarity) fail(source, 1, "header needs level, tag and polarity");
  if (desc.level == PromptLevel::Instance && desc.polarity == Polarity::NotApplicable) {
    fail(source, 1, "instance-level prompts need polarity positive or negative");
  }
  if (desc.level == PromptLevel::Bag && desc.polarity != Polarity::NotApplicable) {
    fail(source, 1, "bag-level prompts take polarity=n/a");
  }

  desc.class_template = trim(lines[1]);
  if (desc.class_template.find(kClassPlaceholder) == std::string::npos) {
    fail(source, 2, "class template must contain [CLASS]");
  }

  std::string body;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    const std::string line = trim(lines[i]);
    if (line.empty()) continue;
    if (!body.empty()) body.push_back(' ');
    body += line;
  }
  desc.description = std::move(body);
  return desc;
}

PromptDescription load_prompt_description(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open prompt file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_prompt_description(buf.str(), path.string());
}

PromptDirectory load_prompt_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("prompt directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::ranges::sort(files, [](const auto& a, const auto& b) {
    return a.filename().string() < b.filename().string();
  });

  PromptDirectory out;
  for (const auto& f : files) {
    PromptDescription d = load_prompt_description(f);
    (d.level == PromptLevel::Instance ? out.instance : out.bag).push_back(std::move(d));
  }
  if (out.instance.empty() && out.bag.empty()) {
    throw ConfigurationError("no prompt description files (*.txt) in " + dir.string());
  }
  return out;
}

PromptGroup build_prompt_group(const PromptDescription& desc, const Vocabulary& vocab,
                               std::size_t context_length, Rng& rng, bool include_description) {
  PromptGroup group;
  group.level = desc.level;
  group.tag = desc.tag;
  group.polarity = desc.polarity;
  if (include_description) group.descriptive_tokens = tokenize(desc.description);
  group.class_tokens = tokenize(desc.class_text());
  for (const auto* tokens : {&group.descriptive_tokens, &group.class_tokens})
    for (const auto& w : *tokens) vocab.id(w);
  group.learnable = init_context(context_length, vocab.word_dim(), rng);
  return group;
}

PromptGroup make_prompt_group(const PromptDescription& desc, Vocabulary& vocab,
                              std::size_t context_length, Rng& rng, bool include_description) {
  vocab.add_all(tokenize(desc.description));
  vocab.add_all(tokenize(desc.class_text()));
  return build_prompt_group(desc, vocab, context_length, rng, include_description);
}

void register_words(const PromptDirectory& prompts, Vocabulary& vocab) {
  for (const auto* list : {&prompts.instance, &prompts.bag}) {
    for (const auto& d : *list) {
      vocab.add_all(tokenize(d.description));
      vocab.add_all(tokenize(d.class_text()));
    }
  }
}

}  // namespace topmil
