#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dear/experiment.hpp"

namespace ex = dear::experiment;

int main(int argc, char** argv) {
  CLI::App app{"Depth-aware video action recognition experiments"};
  app.require_subcommand(1);
  // Global options may also follow the verb.
  app.fallthrough();

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "Experiment config (flat JSON)");
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_option("--seed", seed, "Overrides the config seed");

  auto* generate = app.add_subcommand("generate", "Write a dataset manifest and class summary");
  auto* train = app.add_subcommand("train", "Train one model; writes checkpoint and metrics");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
  auto* ablate = app.add_subcommand("ablate", "Train all three modes and compare them");

  ex::EvalRequest req;
  std::string depth_mode;
  std::string manifest;
  eval->add_option("--checkpoint", req.checkpoint, "Checkpoint file");
  eval->add_option("--manifest", req.manifest, "Manifest file (defaults to the config's)");
  eval->add_option("--depth-mode", depth_mode,
                   "ground_truth, pictorial or quantized_noisy[:levels[:sigma]]");
  eval->add_option("--split", req.split, "train, val or all")->capture_default_str();
  for (auto* cmd : {train, ablate}) {
    cmd->add_option("--manifest", manifest, "Manifest file (defaults to the config's)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    ex::ExperimentConfig cfg = config_path.empty() ? ex::ExperimentConfig{} : ex::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!manifest.empty()) cfg.manifest = manifest;
    if (!depth_mode.empty()) req.depth_mode = dear::synthvid::DepthMode::parse(depth_mode);

    if (generate->parsed()) {
      ex::cmd_generate(cfg, out_dir, std::cout);
    } else if (train->parsed()) {
      ex::cmd_train(cfg, out_dir, std::cout);
    } else if (eval->parsed()) {
      ex::cmd_eval(cfg, req, out_dir, std::cout);
    } else if (ablate->parsed()) {
      ex::cmd_ablate(cfg, out_dir, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ex::exit_code_for(e);
  }
  return 0;
}
