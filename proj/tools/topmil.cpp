// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "topmil/commands.hpp"
#include "topmil/errors.hpp"

namespace {

int report_error(std::string_view command, std::string_view kind, std::string_view message) {
  nlohmann::ordered_json err;
  err["error"] = {{"command", command}, {"kind", kind}, {"message", message}};
  std::cerr << err.dump() << "\n";
  return 1;
}

std::vector<std::size_t> split_shots(const std::string& text) { return topmil::parse_shot_list(text); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"topmil: few-shot multiple instance learning with two-level prompts"};
  app.require_subcommand(1);

  std::string config_path;
  std::string shots_text;
  std::string snapshot_path;
  topmil::Overrides overrides;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run config file (key = value)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", overrides.seed, "base seed for splits and initialization");
    sub->add_option("--shots", shots_text, "comma-separated shot list, e.g. 1,2,4,8,16");
    sub->add_option("--pooler", overrides.pooler, "prompt_guided | attention | mean | max");
    sub->add_option("--bag-prompt-mode", overrides.bag_prompt_mode, "full | learnable_only");
    sub->add_option("--lambda", overrides.lambda, "diversity weight");
    sub->add_option("--jobs", overrides.jobs, "episodes run concurrently");
    sub->add_option("--out", overrides.out, "output directory");
  };

  auto* gen = app.add_subcommand("gen", "generate a synthetic embedding archive");
  auto* train = app.add_subcommand("train", "stability runs per shot; writes results and prompt snapshot");
  auto* eval = app.add_subcommand("eval", "score a prompt snapshot on the archive");
  auto* ablate = app.add_subcommand("ablate", "pooling x bag-prompt ablation grid");
  auto* stability = app.add_subcommand("stability", "repeat-to-repeat AUC spread per shot");
  for (auto* sub : {gen, train, eval, ablate, stability}) add_common(sub);
  eval->add_option("--snapshot", snapshot_path, "prompts.snapshot file (default: <out>/prompts.snapshot)");

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    topmil::RunConfig cfg = topmil::load_run_config(config_path);
    if (!shots_text.empty()) overrides.shots = split_shots(shots_text);
    topmil::apply_overrides(cfg, overrides);
    if (command == "gen") return topmil::cmd_gen(cfg, std::cout);
    if (command == "train") return topmil::cmd_train(cfg, std::cout);
    if (command == "eval") return topmil::cmd_eval(cfg, snapshot_path, std::cout);
    if (command == "ablate") return topmil::cmd_ablate(cfg, std::cout);
    return topmil::cmd_stability(cfg, std::cout);
  } catch (const topmil::Error& e) {
    return report_error(command, topmil::to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report_error(command, "internal", e.what());
  }
}
