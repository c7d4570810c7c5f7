// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#include "topmil/commands.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "topmil/archive.hpp"
#include "topmil/datagen.hpp"
#include "topmil/errors.hpp"

namespace topmil {
namespace {

void prepare_out(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.out.string() + ": " + ec.message());
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

FrozenEncoders encoders_for(const RunConfig& cfg, const PromptDirectory& prompts, std::size_t feature_dim) {
  return make_frozen_encoders(prompts, feature_dim, cfg.encoder_seed, cfg.word_dim);
}

std::size_t feature_dim_of(const std::vector<Bag>& bags) {
  if (bags.empty()) throw ConfigurationError("embedding archive holds no bags");
  return bags.front().features.cols();
}

}  // namespace

const std::vector<AblationCell> kAblationRows = {
    {PoolerKind::Attention, BagPromptMode::Full},
    {PoolerKind::Attention, BagPromptMode::LearnableOnly},
    {PoolerKind::PromptGuided, BagPromptMode::LearnableOnly},
    {PoolerKind::PromptGuided, BagPromptMode::Full},
};

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.shots) cfg.shots = *o.shots;
  if (o.pooler) cfg.train.pooler = parse_pooler(*o.pooler);
  if (o.bag_prompt_mode) cfg.train.bag_prompt_mode = parse_bag_prompt_mode(*o.bag_prompt_mode);
  if (o.lambda) cfg.train.lambda_div = *o.lambda;
  if (o.jobs) cfg.jobs = *o.jobs;
  if (o.out) cfg.out = std::filesystem::absolute(*o.out).lexically_normal();
  cfg.train.validate();
}

std::vector<std::size_t> ablation_columns(std::vector<std::size_t> shots) {
  std::ranges::sort(shots, std::greater<>());
  auto dup = std::ranges::unique(shots);
  shots.erase(dup.begin(), dup.end());
  return shots;
}

std::string ablation_csv(const std::vector<ResultBlock>& blocks, const std::vector<std::size_t>& shots,
                         bool instance_level) {
  const auto columns = ablation_columns(shots);
  std::string out = "Method";
  for (auto s : columns) out += "," + std::to_string(s) + "-shot";
  out += "\n";
  for (const auto& row : kAblationRows) {
    const std::string name = method_name(row.pooler, row.mode, BagHead::Prompt);
    out += name;
    for (auto s : columns) {
      const auto it = std::ranges::find_if(blocks, [&](const ResultBlock& b) { return b.method == name && b.shots == s; });
      out += ",";
      if (it == blocks.end()) continue;
      const auto& summary = it->episode.summary;
      if (!instance_level) {
        out += format_metric(summary.best_bag_auc);
      } else if (summary.instance_auc_at_best) {
        out += format_metric(*summary.instance_auc_at_best);
      }
    }
    out += "\n";
  }
  return out;
}

std::vector<Bag> load_bags(const RunConfig& cfg) {
  EmbeddingArchive archive = read_archive(cfg.embeddings);
  const EncoderSpec precomputed = EncoderSpec::precomputed(archive.feature_dim);
  for (Bag& bag : archive.bags) bag.features = encode_images(bag.features, precomputed);
  return std::move(archive.bags);
}

std::vector<ResultBlock> run_shots(const std::vector<Bag>& bags, const PromptDirectory& prompts,
                                   const RunConfig& cfg) {
  const FrozenEncoders encoders = encoders_for(cfg, prompts, feature_dim_of(bags));
  std::vector<ResultBlock> blocks;
  for (auto shots : cfg.shots) {
    TrainConfig tc = cfg.train;
    tc.shots = shots;
    blocks.push_back({method_name(tc.pooler, tc.bag_prompt_mode, tc.head), shots,
                      stability_run(bags, prompts, encoders, tc, cfg.jobs)});
  }
  return blocks;
}

int cmd_gen(const RunConfig& cfg, std::ostream& log) {
  if (cfg.embeddings.empty()) throw ConfigurationError(cfg.source + ": 'embeddings' (output archive path) is required");
  const SyntheticDataset ds = generate(cfg.synthetic);
  if (cfg.embeddings.has_parent_path()) std::filesystem::create_directories(cfg.embeddings.parent_path());
  EmbeddingArchive archive{cfg.synthetic.feature_dim, ds.bags};
  write_archive(cfg.embeddings, archive, "synthetic seed=" + std::to_string(cfg.synthetic.seed));
  prepare_out(cfg);
  write_file_atomic(cfg.out / "config.echo", echo_run_config(cfg));

  std::size_t instances = 0, witnesses = 0, positive_bags = 0;
  for (const auto& b : ds.bags) {
    instances += b.size();
    positive_bags += b.label == 1;
    for (auto l : *b.instance_labels) witnesses += l;
  }
  log << "wrote " << cfg.embeddings.string() << ": " << ds.bags.size() << " bags (" << positive_bags
      << " positive), " << instances << " instances, " << witnesses << " witnesses, m=" << cfg.synthetic.feature_dim
      << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& log) {
  check_input_paths(cfg, true);
  const PromptDirectory prompts = load_prompt_directory(cfg.prompts);
  const std::vector<Bag> bags = load_bags(cfg);
  prepare_out(cfg);
  const std::string echo = echo_run_config(cfg);
  const auto blocks = run_shots(bags, prompts, cfg);
  write_file_atomic(cfg.out / "results.json", results_json(cfg.task, blocks, echo));
  write_file_atomic(cfg.out / "results.csv", results_csv(cfg.task, blocks));
  write_file_atomic(cfg.out / "prompts.snapshot", snapshot_json(blocks, echo));
  write_file_atomic(cfg.out / "config.echo", echo);
  for (const auto& b : blocks) {
    const auto& s = b.episode.summary;
    log << b.method << " " << b.shots << "-shot: best bag AUC " << format_metric(s.best_bag_auc) << ", mean "
        << format_metric(s.mean_bag_auc) << " +/- " << format_metric(s.std_bag_auc);
    if (s.instance_auc_at_best) log << ", instance AUC " << format_metric(*s.instance_auc_at_best);
    log << "\n";
  }
  return 0;
}

int cmd_stability(const RunConfig& cfg, std::ostream& log) {
  check_input_paths(cfg, true);
  const PromptDirectory prompts = load_prompt_directory(cfg.prompts);
  const std::vector<Bag> bags = load_bags(cfg);
  prepare_out(cfg);
  const std::string echo = echo_run_config(cfg);
  const auto blocks = run_shots(bags, prompts, cfg);

  std::string csv = "method,shots,best_bag_auc,mean_bag_auc,std_bag_auc,mean_instance_auc,std_instance_auc\n";
  for (const auto& b : blocks) {
    const auto& s = b.episode.summary;
    csv += b.method + "," + std::to_string(b.shots) + "," + format_metric(s.best_bag_auc) + "," +
           format_metric(s.mean_bag_auc) + "," + format_metric(s.std_bag_auc) + "," +
           (s.mean_instance_auc ? format_metric(*s.mean_instance_auc) : "") + "," +
           (s.std_instance_auc ? format_metric(*s.std_instance_auc) : "") + "\n";
    log << b.shots << "-shot: STD " << format_metric(s.std_bag_auc) << " over " << b.episode.repeats.size()
        << " repeats\n";
  }
  write_file_atomic(cfg.out / "results.json", results_json(cfg.task, blocks, echo));
  write_file_atomic(cfg.out / "results.csv", results_csv(cfg.task, blocks));
  write_file_atomic(cfg.out / "stability.csv", csv);
  write_file_atomic(cfg.out / "config.echo", echo);
  return 0;
}

int cmd_ablate(const RunConfig& cfg, std::ostream& log) {
  check_input_paths(cfg, true);
  const PromptDirectory prompts = load_prompt_directory(cfg.prompts);
  const std::vector<Bag> bags = load_bags(cfg);
  prepare_out(cfg);
  const std::string echo = echo_run_config(cfg);

  std::vector<ResultBlock> blocks;
  for (const auto& row : kAblationRows) {
    RunConfig cell = cfg;
    cell.train.pooler = row.pooler;
    cell.train.bag_prompt_mode = row.mode;
    cell.train.head = BagHead::Prompt;
    for (auto& b : run_shots(bags, prompts, cell)) {
      log << b.method << " " << b.shots << "-shot: " << format_metric(b.episode.summary.best_bag_auc) << "\n";
      blocks.push_back(std::move(b));
    }
  }
  write_file_atomic(cfg.out / "ablation_bag.csv", ablation_csv(blocks, cfg.shots, false));
  write_file_atomic(cfg.out / "ablation_instance.csv", ablation_csv(blocks, cfg.shots, true));
  write_file_atomic(cfg.out / "results.json", results_json(cfg.task, blocks, echo));
  write_file_atomic(cfg.out / "results.csv", results_csv(cfg.task, blocks));
  write_file_atomic(cfg.out / "config.echo", echo);
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::filesystem::path& snapshot, std::ostream& log) {
  check_input_paths(cfg, true);
  const std::filesystem::path snap = snapshot.empty() ? cfg.out / "prompts.snapshot" : snapshot;
  if (!std::filesystem::is_regular_file(snap)) throw IoError("snapshot not found: " + snap.string());
  const auto entries = parse_snapshot(read_text(snap), snap.string());
  const PromptDirectory prompts = load_prompt_directory(cfg.prompts);
  const std::vector<Bag> bags = load_bags(cfg);
  const FrozenEncoders encoders = encoders_for(cfg, prompts, feature_dim_of(bags));
  prepare_out(cfg);

  nlohmann::ordered_json doc;
  doc["snapshot"] = snap.string();
  auto& results = doc["results"] = nlohmann::ordered_json::array();
  for (const auto& entry : entries) {
    TrainConfig tc = cfg.train;
    tc.shots = entry.shots;
    tc.pooler = entry.pooler;
    tc.bag_prompt_mode = entry.bag_prompt_mode;
    tc.head = entry.head;
    EpisodeModel model = init_model(prompts, encoders, tc, entry.seed);
    load_snapshot_into(entry, model);
    std::vector<const Bag*> test;
    for (const auto& b : bags)
      if (std::ranges::find(entry.support_ids, b.id) == entry.support_ids.end()) test.push_back(&b);
    const EvalMetrics m = evaluate(test, model, encoders, tc);
    results.push_back({{"method", entry.method},
                       {"shots", entry.shots},
                       {"test_bags", test.size()},
                       {"bag_auc", m.bag_auc},
                       {"instance_auc", m.instance_auc ? nlohmann::ordered_json(*m.instance_auc) : nullptr}});
    log << entry.method << " " << entry.shots << "-shot: bag AUC " << format_metric(m.bag_auc) << " on "
        << test.size() << " bags\n";
  }
  write_file_atomic(cfg.out / "eval.json", doc.dump(2) + "\n");
  write_file_atomic(cfg.out / "config.echo", echo_run_config(cfg));
  return 0;
}

}  // namespace topmil
