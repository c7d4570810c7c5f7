// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#include "topmil/results.hpp"

#include <charconv>
#include <cstdio>

#include <json.hpp>

#include "topmil/errors.hpp"

namespace topmil {
namespace {

using Json = nlohmann::ordered_json;

constexpr std::string_view kSnapshotFormat = "topmil-snapshot-1";

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

Json matrix_json(const Matrix& m) {
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"values", Json(std::vector<double>(m.data().begin(), m.data().end()))}};
}

Matrix matrix_from(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  return Matrix(rows, cols, j.at("values").get<std::vector<double>>());
}

Json groups_json(const std::vector<PromptGroup>& groups) {
  Json out = Json::array();
  for (const auto& g : groups) {
    Json entry = matrix_json(g.learnable);
    entry["tag"] = g.tag;
    entry["polarity"] = to_string(g.polarity);
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string results_json(std::string_view task, const std::vector<ResultBlock>& blocks,
                         std::string_view config_echo) {
  Json doc;
  doc["task"] = task;
  doc["config_echo"] = config_echo;
  Json& out = doc["results"] = Json::array();
  for (const auto& block : blocks) {
    const auto& s = block.episode.summary;
    Json repeats = Json::array();
    for (const auto& r : block.episode.repeats) {
      repeats.push_back({{"repeat", r.repeat},
                         {"seed", r.seed},
                         {"bag_auc", r.bag_auc},
                         {"instance_auc", optional_number(r.instance_auc)},
                         {"final_loss", r.loss_history.back()},
                         {"loss_history", r.loss_history},
                         {"support_ids", r.support_ids}});
    }
    out.push_back({{"method", block.method},
                   {"shots", block.shots},
                   {"pooler", to_string(block.episode.config.pooler)},
                   {"bag_prompt_mode", to_string(block.episode.config.bag_prompt_mode)},
                   {"head", to_string(block.episode.config.head)},
                   {"repeats", std::move(repeats)},
                   {"best", {{"repeat", s.best_repeat},
                             {"bag_auc", s.best_bag_auc},
                             {"instance_auc", optional_number(s.instance_auc_at_best)},
                             {"max_instance_auc", optional_number(s.best_instance_auc)}}},
                   {"mean", {{"bag_auc", s.mean_bag_auc}, {"instance_auc", optional_number(s.mean_instance_auc)}}},
                   {"std", {{"bag_auc", s.std_bag_auc}, {"instance_auc", optional_number(s.std_instance_auc)}}}});
  }
  return doc.dump(2) + "\n";
}

std::string results_csv(std::string_view task, const std::vector<ResultBlock>& blocks) {
  std::string out(kResultsCsvHeader);
  out += "\n";
  for (const auto& block : blocks) {
    for (const auto& r : block.episode.repeats) {
      out += csv_field(task) + "," + csv_field(block.method) + "," + std::to_string(block.shots) + "," +
             std::to_string(r.repeat) + "," + std::to_string(r.seed) + "," + shortest(r.bag_auc) + "," +
             (r.instance_auc ? shortest(*r.instance_auc) : std::string()) + "," +
             shortest(r.loss_history.back()) + "\n";
    }
  }
  return out;
}

std::string snapshot_json(const std::vector<ResultBlock>& blocks, std::string_view config_echo) {
  Json doc;
  doc["format"] = kSnapshotFormat;
  doc["config_echo"] = config_echo;
  Json& entries = doc["entries"] = Json::array();
  for (const auto& block : blocks) {
    const auto& best = block.episode.repeats.at(block.episode.summary.best_repeat);
    const auto& m = best.model;
    const auto& cfg = block.episode.config;
    entries.push_back({{"method", block.method},
                       {"pooler", to_string(cfg.pooler)},
                       {"bag_prompt_mode", to_string(cfg.bag_prompt_mode)},
                       {"head", to_string(cfg.head)},
                       {"shots", block.shots},
                       {"repeat", best.repeat},
                       {"seed", best.seed},
                       {"support_ids", best.support_ids},
                       {"instance_contexts", groups_json(m.instance_groups)},
                       {"bag_contexts", groups_json(m.bag_groups)},
                       {"attention", {{"V", matrix_json(m.attention.V)}, {"w", m.attention.w}}},
                       {"probe", {{"weight", matrix_json(m.probe.weight)}, {"bias", m.probe.bias}}}});
  }
  return doc.dump(1) + "\n";
}

std::vector<SnapshotEntry> parse_snapshot(std::string_view text, std::string_view source) {
  try {
    const auto doc = nlohmann::json::parse(text);
    if (doc.at("format").get<std::string>() != kSnapshotFormat) {
      throw FormatError(std::string(source) + ": not a " + std::string(kSnapshotFormat) + " file");
    }
    std::vector<SnapshotEntry> out;
    for (const auto& e : doc.at("entries")) {
      SnapshotEntry s;
      s.method = e.at("method").get<std::string>();
      s.pooler = parse_pooler(e.at("pooler").get<std::string>());
      s.bag_prompt_mode = parse_bag_prompt_mode(e.at("bag_prompt_mode").get<std::string>());
      s.head = parse_bag_head(e.at("head").get<std::string>());
      s.shots = e.at("shots").get<std::size_t>();
      s.repeat = e.at("repeat").get<std::size_t>();
      s.seed = e.at("seed").get<std::uint64_t>();
      s.support_ids = e.at("support_ids").get<std::vector<std::string>>();
      for (const auto& g : e.at("instance_contexts")) s.instance_contexts.push_back(matrix_from(g));
      for (const auto& g : e.at("bag_contexts")) s.bag_contexts.push_back(matrix_from(g));
      s.attention.V = matrix_from(e.at("attention").at("V"));
      s.attention.w = e.at("attention").at("w").get<std::vector<double>>();
      s.probe.weight = matrix_from(e.at("probe").at("weight"));
      s.probe.bias = e.at("probe").at("bias").get<std::vector<double>>();
      out.push_back(std::move(s));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string(source) + ": invalid snapshot: " + e.what());
  } catch (const ConfigurationError& e) {
    throw FormatError(std::string(source) + ": invalid snapshot: " + e.what());
  } catch (const ContractViolation& e) {
    throw FormatError(std::string(source) + ": invalid snapshot: " + e.what());
  }
}

void load_snapshot_into(const SnapshotEntry& entry, EpisodeModel& model) {
  auto copy_groups = [](const std::vector<Matrix>& src, std::vector<PromptGroup>& dst, const char* what) {
    if (src.size() != dst.size()) {
      throw FormatError(std::string("snapshot has ") + std::to_string(src.size()) + " " + what +
                        " contexts, prompt directory has " + std::to_string(dst.size()));
    }
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (src[i].rows() != dst[i].learnable.rows() || src[i].cols() != dst[i].learnable.cols()) {
        throw FormatError(std::string("snapshot ") + what + " context " + std::to_string(i) + " has the wrong shape");
      }
      dst[i].learnable = src[i];
    }
  };
  copy_groups(entry.instance_contexts, model.instance_groups, "instance");
  copy_groups(entry.bag_contexts, model.bag_groups, "bag");
  if (entry.attention.V.rows() != model.attention.V.rows() || entry.attention.V.cols() != model.attention.V.cols() ||
      entry.attention.w.size() != model.attention.w.size()) {
    throw FormatError("snapshot attention parameters have the wrong shape");
  }
  if (entry.probe.weight.rows() != model.probe.weight.rows() ||
      entry.probe.weight.cols() != model.probe.weight.cols() || entry.probe.bias.size() != model.probe.bias.size()) {
    throw FormatError("snapshot linear probe has the wrong shape");
  }
  model.attention = entry.attention;
  model.probe = entry.probe;
}

}  // namespace topmil
