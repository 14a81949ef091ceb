#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "dear/experiment.hpp"
#include "dear/model.hpp"
#include "dear/synthvid.hpp"

namespace dear::testing {

// 16x16 frames, two sampled frames, two classes, side dim 8.
inline synthvid::GenConfig micro_gen() {
  synthvid::GenConfig g;
  g.height = 16;
  g.width = 16;
  g.frames_total = 8;
  g.frames_sampled = 2;
  g.stride = 4;
  g.num_classes = 2;
  return g;
}

inline model::ModelConfig micro_model(model::AblationMode mode = model::AblationMode::kRgbDepthMamba,
                                      std::uint64_t seed = 7) {
  model::ModelConfig m;
  m.backbone.height = 16;
  m.backbone.width = 16;
  m.backbone.patch = 8;
  m.backbone.dim = 16;
  m.backbone.layers = 2;
  m.backbone.heads = 2;
  m.backbone.mlp_ratio = 2;
  m.backbone.max_frames = 2;
  m.side.dim = 8;
  m.side.heads = 2;
  m.side.mlp_ratio = 2;
  m.ssm.model_dim = 16;
  m.ssm.expand = 2;
  m.ssm.state = 4;
  m.ssm.conv_kernel = 3;
  m.ssm.blocks = 1;
  m.ssm.out_dim = 8;
  m.ssm.dt_rank = 2;
  m.fusion_layers = 1;
  m.fusion_heads = 2;
  m.num_classes = 2;
  m.mode = mode;
  m.init_seed = seed;
  return m;
}

inline experiment::ExperimentConfig micro_experiment() {
  experiment::ExperimentConfig cfg;
  cfg.gen = micro_gen();
  cfg.model = micro_model();
  cfg.n_per_class = 6;
  cfg.split_ratio = 0.5;
  cfg.seed = 11;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 4;
  cfg.train.lr = 3e-3;
  cfg.record_timing = false;
  return cfg;
}

// Moves a freshly initialised model to a point where every gradient component
// is resolvable by finite differences: gates open, and SSM step sizes raised
// from their small initial range to [0.2, 1] so state-matrix gradients are
// not lost under roundoff.
inline void condition_for_gradcheck(const model::DearModel& m, Rng& rng) {
  for (auto& p : m.trainable()) {
    const bool gate = p.name.find(".alpha") != std::string::npos;
    const bool step = p.name.find(".dt_bias") != std::string::npos;
    if (!gate && !step) continue;
    for (auto& v : p.tensor.mutable_data()) {
      v = gate ? rng.normal(0.0, 0.5) : std::log(std::expm1(rng.uniform(0.2, 1.0)));
    }
  }
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dear_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace dear::testing
