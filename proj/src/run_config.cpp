// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#include "topmil/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "topmil/errors.hpp"

namespace topmil {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::uint64_t to_u64(std::string_view text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigurationError("expected a non-negative integer, got '" + std::string(text) + "'");
  return v;
}

double to_double(std::string_view text) {
  const std::string s(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ConfigurationError("expected a number, got '" + s + "'");
  return v;
}

bool to_bool(std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigurationError("expected true or false, got '" + std::string(text) + "'");
}

std::vector<std::size_t> to_index_list(std::string_view text) {
  std::vector<std::size_t> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigurationError("empty entry in list '" + std::string(text) + "'");
    out.push_back(static_cast<std::size_t>(to_u64(item)));
  }
  if (out.empty()) throw ConfigurationError("empty list");
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

// shortest text that parses back to the same double
std::string exact(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Field {
  std::string_view key;
  std::function<void(RunConfig&, const std::string&, const std::filesystem::path&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

std::string absolute_or_empty(const std::filesystem::path& p) {
  return p.empty() ? std::string() : std::filesystem::absolute(p).lexically_normal().string();
}

#define TOPMIL_SIZE(KEY, MEMBER) \
  {KEY, [](RunConfig& c, const std::string& v, const auto&) { c.MEMBER = static_cast<std::size_t>(to_u64(v)); }, \
   [](const RunConfig& c) { return std::to_string(c.MEMBER); }}
#define TOPMIL_U64(KEY, MEMBER) \
  {KEY, [](RunConfig& c, const std::string& v, const auto&) { c.MEMBER = to_u64(v); }, \
   [](const RunConfig& c) { return std::to_string(c.MEMBER); }}
#define TOPMIL_REAL(KEY, MEMBER) \
  {KEY, [](RunConfig& c, const std::string& v, const auto&) { c.MEMBER = to_double(v); }, \
   [](const RunConfig& c) { return exact(c.MEMBER); }}
#define TOPMIL_PATH(KEY, MEMBER) \
  {KEY, [](RunConfig& c, const std::string& v, const std::filesystem::path& base) { c.MEMBER = resolve(base, v); }, \
   [](const RunConfig& c) { return absolute_or_empty(c.MEMBER); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"task", [](RunConfig& c, const std::string& v, const auto&) { c.task = v; },
       [](const RunConfig& c) { return c.task; }},
      TOPMIL_PATH("embeddings", embeddings),
      TOPMIL_PATH("prompts", prompts),
      TOPMIL_PATH("out", out),
      {"shots", [](RunConfig& c, const std::string& v, const auto&) { c.shots = parse_shot_list(v); },
       [](const RunConfig& c) { return join(c.shots); }},
      {"pooler", [](RunConfig& c, const std::string& v, const auto&) { c.train.pooler = parse_pooler(v); },
       [](const RunConfig& c) { return std::string(to_string(c.train.pooler)); }},
      {"bag_prompt_mode",
       [](RunConfig& c, const std::string& v, const auto&) { c.train.bag_prompt_mode = parse_bag_prompt_mode(v); },
       [](const RunConfig& c) { return std::string(to_string(c.train.bag_prompt_mode)); }},
      {"head", [](RunConfig& c, const std::string& v, const auto&) { c.train.head = parse_bag_head(v); },
       [](const RunConfig& c) { return std::string(to_string(c.train.head)); }},
      {"diversity", [](RunConfig& c, const std::string& v, const auto&) { c.train.diversity = parse_diversity(v); },
       [](const RunConfig& c) { return std::string(to_string(c.train.diversity)); }},
      TOPMIL_REAL("lambda", train.lambda_div),
      TOPMIL_REAL("tau", train.tau),
      TOPMIL_REAL("lr", train.lr),
      TOPMIL_REAL("momentum", train.momentum),
      TOPMIL_SIZE("epochs", train.epochs),
      TOPMIL_SIZE("context_length", train.context_length),
      TOPMIL_SIZE("repeats", train.repeats),
      TOPMIL_U64("seed", train.seed),
      TOPMIL_SIZE("num_classes", train.num_classes),
      TOPMIL_SIZE("attention_dim", train.attention_dim),
      TOPMIL_SIZE("test_reserve", train.test_reserve),
      {"fixed_support", [](RunConfig& c, const std::string& v, const auto&) { c.train.fixed_support = to_bool(v); },
       [](const RunConfig& c) { return std::string(c.train.fixed_support ? "true" : "false"); }},
      TOPMIL_U64("encoder_seed", encoder_seed),
      TOPMIL_SIZE("word_dim", word_dim),
      TOPMIL_SIZE("jobs", jobs),
      TOPMIL_SIZE("synthetic.feature_dim", synthetic.feature_dim),
      TOPMIL_SIZE("synthetic.phenotypes", synthetic.phenotypes),
      {"synthetic.positive_phenotypes",
       [](RunConfig& c, const std::string& v, const auto&) { c.synthetic.positive_phenotypes = to_index_list(v); },
       [](const RunConfig& c) { return join(c.synthetic.positive_phenotypes); }},
      TOPMIL_REAL("synthetic.sigma", synthetic.sigma),
      TOPMIL_REAL("synthetic.witness_rate", synthetic.witness_rate),
      TOPMIL_SIZE("synthetic.bag_size_min", synthetic.bag_size_min),
      TOPMIL_SIZE("synthetic.bag_size_max", synthetic.bag_size_max),
      TOPMIL_SIZE("synthetic.bags_per_class", synthetic.bags_per_class),
      TOPMIL_U64("synthetic.seed", synthetic.seed),
  };
  return table;
}

#undef TOPMIL_SIZE
#undef TOPMIL_U64
#undef TOPMIL_REAL
#undef TOPMIL_PATH

const Field* find_field(std::string_view key) {
  for (const auto& f : fields())
    if (f.key == key) return &f;
  return nullptr;
}

}  // namespace

const std::vector<std::string_view> kRunConfigKeys = [] {
  std::vector<std::string_view> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}();

std::vector<std::size_t> parse_shot_list(std::string_view text) {
  auto shots = to_index_list(text);
  for (auto s : shots)
    if (s == 0) throw ConfigurationError("shots must be at least 1");
  return shots;
}

RunConfig parse_run_config(std::string_view text, std::string_view source,
                           const std::filesystem::path& base_dir) {
  RunConfig cfg;
  cfg.source = std::string(source);
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    auto where = [&] { return std::string(source) + ":" + std::to_string(line_no) + ": "; };
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigurationError(where() + "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const Field* field = find_field(key);
    if (!field) throw ConfigurationError(where() + "unknown key '" + key + "'");
    if (cfg.lines.contains(key)) {
      throw ConfigurationError(where() + "duplicate key '" + key + "' (first set on line " +
                               std::to_string(cfg.lines[key]) + ")");
    }
    if (value.empty()) throw ConfigurationError(where() + "missing value for '" + key + "'");
    try {
      field->set(cfg, value, base_dir);
    } catch (const Error& e) {
      throw ConfigurationError(where() + key + ": " + e.what());
    }
    cfg.lines[key] = line_no;
  }
  try {
    cfg.train.validate();
    cfg.synthetic.validate();
  } catch (const Error& e) {
    throw ConfigurationError(std::string(source) + ": " + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.string(), path.parent_path());
}

void check_input_paths(const RunConfig& cfg, bool need_embeddings) {
  auto where = [&](const std::string& key) {
    const auto it = cfg.lines.find(key);
    return it == cfg.lines.end() ? cfg.source + ": " : cfg.source + ":" + std::to_string(it->second) + ": ";
  };
  if (cfg.prompts.empty()) throw ConfigurationError(where("prompts") + "'prompts' is required");
  if (!std::filesystem::is_directory(cfg.prompts)) {
    throw ConfigurationError(where("prompts") + "prompt directory does not exist: " + cfg.prompts.string());
  }
  if (!need_embeddings) return;
  if (cfg.embeddings.empty()) throw ConfigurationError(where("embeddings") + "'embeddings' is required");
  if (!std::filesystem::is_regular_file(cfg.embeddings)) {
    throw ConfigurationError(where("embeddings") + "embedding archive does not exist: " + cfg.embeddings.string());
  }
}

std::string echo_run_config(const RunConfig& cfg) {
  std::string out = "# topmil config echo\n";
  for (const auto& f : fields()) {
    const std::string value = f.get(cfg);
    if (!value.empty()) out += std::string(f.key) + " = " + value + "\n";
  }
  return out;
}

}  // namespace topmil
