#include "dear/model.hpp"

#include <sstream>

#include "dear/errors.hpp"
#include "dear/ops.hpp"

namespace dear::model {

std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::kRgbOnly:
      return "rgb_only";
    case AblationMode::kRgbDepth:
      return "rgb_depth";
    case AblationMode::kRgbDepthMamba:
      return "rgb_depth_mamba";
  }
  return "rgb_depth_mamba";
}

AblationMode parse_ablation_mode(const std::string& text) {
  if (text == "rgb_only") return AblationMode::kRgbOnly;
  if (text == "rgb_depth") return AblationMode::kRgbDepth;
  if (text == "rgb_depth_mamba") return AblationMode::kRgbDepthMamba;
  throw ContractError("unknown ablation mode '" + text + "'");
}

std::string to_string(FuseSpace f) { return f == FuseSpace::kLogit ? "logit" : "prob"; }

FuseSpace parse_fuse_space(const std::string& text) {
  if (text == "logit") return FuseSpace::kLogit;
  if (text == "prob") return FuseSpace::kProb;
  throw ContractError("unknown fuse space '" + text + "'");
}

void ModelConfig::validate() const {
  backbone.validate();
  if (side.dim == 0 || side.heads == 0 || side.dim % side.heads != 0) {
    throw ContractError("ModelConfig.side_heads: must divide side_dim");
  }
  if (ssm.model_dim != backbone.dim) {
    throw ContractError("ModelConfig.ssm_model_dim: must equal backbone dim");
  }
  if (ssm.out_dim != side.dim) {
    throw ContractError("ModelConfig.ssm_out_dim: must equal side dim");
  }
  if (fusion_layers == 0) throw ContractError("ModelConfig.fusion_layers: must be >= 1");
  if (fusion_heads == 0 || side.dim % fusion_heads != 0) {
    throw ContractError("ModelConfig.fusion_heads: must divide side_dim");
  }
  if (num_classes < 2) throw ContractError("ModelConfig.num_classes: must be >= 2");
}

std::vector<std::pair<std::string, std::string>> ModelConfig::fields() const {
  auto s = [](auto v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };
  return {
      {"height", s(backbone.height)},
      {"width", s(backbone.width)},
      {"patch", s(backbone.patch)},
      {"backbone_dim", s(backbone.dim)},
      {"backbone_layers", s(backbone.layers)},
      {"backbone_heads", s(backbone.heads)},
      {"backbone_mlp_ratio", s(backbone.mlp_ratio)},
      {"frames", s(backbone.max_frames)},
      {"side_dim", s(side.dim)},
      {"side_heads", s(side.heads)},
      {"side_mlp_ratio", s(side.mlp_ratio)},
      {"ssm_expand", s(ssm.expand)},
      {"ssm_state", s(ssm.state)},
      {"ssm_conv_kernel", s(ssm.conv_kernel)},
      {"ssm_blocks", s(ssm.blocks)},
      {"ssm_dt_rank", s(ssm.dt_rank)},
      {"fusion_layers", s(fusion_layers)},
      {"fusion_heads", s(fusion_heads)},
      {"num_classes", s(num_classes)},
      {"mode", to_string(mode)},
      {"init_seed", s(init_seed)},
  };
}

DearModel::DearModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  // Each component draws from its own stream, so the backbone and the RGB
  // branch are initialised identically in every ablation mode.
  Rng backbone_rng(derive_seed(cfg.init_seed, 1));
  backbone_ = encoders::init_backbone(cfg.backbone, backbone_rng);
  Rng rgb_rng(derive_seed(cfg.init_seed, 2));
  rgb_side_ = encoders::init_side_network(cfg.side, cfg.backbone, rgb_rng);
  const std::uint32_t d = cfg.side.dim;
  if (cfg.mode == AblationMode::kRgbOnly) {
    Rng head_rng(derive_seed(cfg.init_seed, 3));
    head_a_ = fusion::init_head(d, cfg.num_classes, head_rng);
    return;
  }
  Rng depth_rng(derive_seed(cfg.init_seed, 4));
  depth_side_ = encoders::init_side_network(cfg.side, cfg.backbone, depth_rng);
  Rng gca_rng(derive_seed(cfg.init_seed, 5));
  gca_a_ = fusion::GcaPair{
      fusion::init_gca(d, cfg.fusion_heads, cfg.fusion_layers, gca_rng),
      fusion::init_gca(d, cfg.fusion_heads, cfg.fusion_layers, gca_rng)};
  Rng head_rng(derive_seed(cfg.init_seed, 6));
  head_a_ = fusion::init_head(2 * d, cfg.num_classes, head_rng);
  if (cfg.mode == AblationMode::kRgbDepthMamba) {
    Rng ssm_rng(derive_seed(cfg.init_seed, 7));
    ssm_ = ssm::init_ssm(cfg.ssm, ssm_rng);
    Rng gca_b_rng(derive_seed(cfg.init_seed, 8));
    gca_b_ = fusion::GcaPair{
        fusion::init_gca(d, cfg.fusion_heads, cfg.fusion_layers, gca_b_rng),
        fusion::init_gca(d, cfg.fusion_heads, cfg.fusion_layers, gca_b_rng)};
    Rng head_b_rng(derive_seed(cfg.init_seed, 9));
    head_b_ = fusion::init_head(2 * d, cfg.num_classes, head_b_rng);
  }
}

FrozenFeatures DearModel::encode_frozen(const synthvid::VideoClip& clip) const {
  return encode_frozen(clip, clip.depth);
}

FrozenFeatures DearModel::encode_frozen(const synthvid::VideoClip& clip,
                                        const std::vector<float>& depth) const {
  FrozenFeatures f;
  f.rgb_acts = encoders::frozen_forward(
      encoders::patch_embed(encoders::rgb_frames(clip), backbone_), backbone_);
  if (uses_depth()) {
    f.depth_acts = encoders::frozen_forward(
        encoders::patch_embed(encoders::depth_frames(clip, depth), backbone_), backbone_);
  }
  return f;
}

ModelOutput DearModel::forward(const FrozenFeatures& features, const ForwardOptions& opts) const {
  ModelOutput out;
  out.rgb_feats = encoders::side_tokens(features.rgb_acts, rgb_side_);
  if (!uses_depth()) {
    out.logits_a = fusion::unimodal_logits(out.rgb_feats, head_a_);
    out.fused = out.logits_a;
    out.probs = softmax(out.fused);
    return out;
  }
  if (features.depth_acts.empty()) {
    throw ContractError("forward: depth features missing for mode " + to_string(cfg_.mode));
  }
  out.depth_feats = encoders::side_tokens(features.depth_acts, *depth_side_);
  if (opts.fusion_enabled) {
    const auto [rgb_ctx, depth_ctx] = fusion::bidirectional_fuse(out.rgb_feats, out.depth_feats, *gca_a_);
    out.logits_a = fusion::stream_logits(rgb_ctx, depth_ctx, head_a_);
  } else {
    out.logits_a = fusion::stream_logits(out.rgb_feats, out.depth_feats, head_a_);
  }
  if (cfg_.mode == AblationMode::kRgbDepth) {
    out.fused = out.logits_a;
    out.probs = softmax(out.fused);
    return out;
  }
  // Class token of act 0 is not part of the scanned sequence.
  const Tensor& depth_tokens = features.depth_acts.front();
  out.mamba_feats = ssm::mamba_tokens(slice_rows(depth_tokens, 1, depth_tokens.dim(0) - 1), *ssm_);
  if (opts.fusion_enabled) {
    const auto [rgb_ctx, mamba_ctx] = fusion::bidirectional_fuse(out.rgb_feats, out.mamba_feats, *gca_b_);
    out.logits_b = fusion::stream_logits(rgb_ctx, mamba_ctx, *head_b_);
  } else {
    out.logits_b = fusion::stream_logits(out.rgb_feats, out.mamba_feats, *head_b_);
  }
  out.fused = fusion::mean_fuse(out.logits_a, out.logits_b);
  out.probs = opts.fuse_space == FuseSpace::kLogit
                  ? softmax(out.fused)
                  : mean_of({softmax(out.logits_a), softmax(out.logits_b)});
  return out;
}

ParamList DearModel::trainable() const {
  ParamList out = rgb_side_.named("rgb_side.");
  auto append = [&out](ParamList more) {
    for (auto& p : more) out.push_back(std::move(p));
  };
  if (depth_side_) append(depth_side_->named("depth_side."));
  if (ssm_) append(ssm_->named("ssm."));
  if (gca_a_) append(gca_a_->named("gca_a."));
  if (gca_b_) append(gca_b_->named("gca_b."));
  append(head_a_.named("head_a."));
  if (head_b_) append(head_b_->named("head_b."));
  return out;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace dear::model
