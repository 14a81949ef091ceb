#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dear/attention.hpp"
#include "dear/params.hpp"
#include "dear/rng.hpp"
#include "dear/synthvid.hpp"
#include "dear/tensor.hpp"

namespace dear::encoders {

// ---------------------------------------------------------------------------
// Frozen patch-transformer backbone.

struct BackboneConfig {
  std::uint32_t height = 64;
  std::uint32_t width = 64;
  std::uint32_t channels = 3;
  std::uint32_t patch = 16;
  std::uint32_t dim = 64;
  std::uint32_t layers = 4;
  std::uint32_t heads = 4;
  std::uint32_t mlp_ratio = 4;
  std::uint32_t max_frames = 8;

  std::uint32_t patches_per_frame() const { return (height / patch) * (width / patch); }
  std::uint32_t patch_features() const { return channels * patch * patch; }
  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

struct BackboneLayer {
  Tensor ln1_gain, ln1_bias;
  AttentionWeights attn;
  Tensor ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;
};

// Every tensor has requires_grad=false.
struct BackboneParams {
  BackboneConfig config;
  Tensor patch_w;       // [C*p*p x D]
  Tensor patch_b;       // [D]
  Tensor cls_token;     // [D]
  Tensor pos_spatial;   // [P x D]
  Tensor pos_temporal;  // [max_frames x D]
  std::vector<BackboneLayer> layers;

  ParamList named() const;
};

BackboneParams init_backbone(const BackboneConfig& cfg, Rng& rng);

// T x H x W x C frames as float64.
struct FrameStack {
  std::uint32_t frames = 0, height = 0, width = 0, channels = 0;
  std::vector<double> values;
};

FrameStack rgb_frames(const synthvid::VideoClip& clip);
// Depth replicated into three channels so it shares the RGB patch embedding.
FrameStack depth_frames(const synthvid::VideoClip& clip, const std::vector<float>& depth);

// Non-overlapping patches, frame-major then row-major: [T*P x C*p*p]; each
// patch vector ordered (row, col, channel).
Tensor extract_patches(const FrameStack& frames, std::uint32_t patch);

struct TokenSequence {
  Tensor tokens;  // [(T*P + 1) x D], class token first
  std::uint32_t frames = 0;
  std::uint32_t patches = 0;
  std::uint32_t dim = 0;

  std::size_t size() const { return static_cast<std::size_t>(frames) * patches + 1; }
  // The T*P patch tokens without the class token.
  Tensor patch_tokens() const;
};

// Linear patch projection only, before any position embedding: [T*P x D].
Tensor project_patches(const Tensor& patches, const BackboneParams& backbone);

// Projection + spatial and temporal position embeddings + class token.
TokenSequence patch_embed(const FrameStack& frames, const BackboneParams& backbone);

// Pre-norm transformer layers without gradient tracking. Element 0 is the
// input token sequence, element l the output of layer l (L + 1 entries).
std::vector<Tensor> frozen_forward(const TokenSequence& tokens,
                                   const BackboneParams& backbone);

// ---------------------------------------------------------------------------
// Trainable side network running in parallel with the frozen layers.

struct SideConfig {
  std::uint32_t dim = 16;  // d = D / 4
  std::uint32_t heads = 2;
  std::uint32_t mlp_ratio = 2;
  bool operator==(const SideConfig&) const = default;
};

struct SideBlock {
  Tensor ln1_gain, ln1_bias;
  AttentionWeights attn;
  Tensor ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;
};

// Every tensor has requires_grad=true.
struct SideNetParams {
  SideConfig config;
  std::vector<Tensor> down_w;  // L + 1 entries, [D x d]
  std::vector<Tensor> down_b;  // L + 1 entries, [d]
  std::vector<SideBlock> blocks;  // L entries
  std::vector<Tensor> fusion;  // L entries, one value each
  Tensor norm_gain, norm_bias;

  ParamList named(const std::string& prefix) const;
};

SideNetParams init_side_network(const SideConfig& cfg, const BackboneConfig& backbone,
                                Rng& rng);

// s_0 = down_0(a_0); s_l = block_l(s_{l-1}) + fusion_l * down_l(a_l); final
// norm. Returns the per-token side state [n x d].
Tensor side_tokens(const std::vector<Tensor>& per_layer_acts, const SideNetParams& side);
// Mean-pooled side_tokens: [d].
Tensor side_forward(const std::vector<Tensor>& per_layer_acts, const SideNetParams& side);

}  // namespace dear::encoders
