#include <cmath>
#include <string>

#include "dear/encoders.hpp"
#include "dear/errors.hpp"
#include "dear/ops.hpp"

namespace dear::encoders {

void BackboneConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ContractError("BackboneConfig." + field + ": " + why);
  };
  if (patch == 0) fail("patch", "must be >= 1");
  if (height % patch != 0 || width % patch != 0) {
    throw ShapeError("frame size " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by patch " + std::to_string(patch));
  }
  if (dim == 0) fail("dim", "must be >= 1");
  if (heads == 0 || dim % heads != 0) fail("heads", "must divide dim");
  if (layers == 0) fail("layers", "must be >= 1");
  if (max_frames == 0) fail("max_frames", "must be >= 1");
  if (channels == 0) fail("channels", "must be >= 1");
}

ParamList BackboneParams::named() const {
  ParamList out = {{"backbone.patch_w", patch_w},
                   {"backbone.patch_b", patch_b},
                   {"backbone.cls_token", cls_token},
                   {"backbone.pos_spatial", pos_spatial},
                   {"backbone.pos_temporal", pos_temporal}};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "backbone.layer" + std::to_string(l) + ".";
    const BackboneLayer& L = layers[l];
    out.push_back({p + "ln1_gain", L.ln1_gain});
    out.push_back({p + "ln1_bias", L.ln1_bias});
    out.push_back({p + "wq", L.attn.wq});
    out.push_back({p + "wk", L.attn.wk});
    out.push_back({p + "wv", L.attn.wv});
    out.push_back({p + "wo", L.attn.wo});
    out.push_back({p + "ln2_gain", L.ln2_gain});
    out.push_back({p + "ln2_bias", L.ln2_bias});
    out.push_back({p + "w1", L.w1});
    out.push_back({p + "b1", L.b1});
    out.push_back({p + "w2", L.w2});
    out.push_back({p + "b2", L.b2});
  }
  return out;
}

BackboneParams init_backbone(const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t D = cfg.dim;
  BackboneParams b;
  b.config = cfg;
  b.patch_w = init_linear(cfg.patch_features(), D, rng, false);
  b.patch_b = init_normal({D}, 0.02, rng, false);
  b.cls_token = init_normal({D}, 0.5, rng, false);
  b.pos_spatial = init_normal({cfg.patches_per_frame(), D}, 0.5, rng, false);
  b.pos_temporal = init_normal({cfg.max_frames, D}, 0.5, rng, false);
  for (std::uint32_t l = 0; l < cfg.layers; ++l) {
    BackboneLayer L;
    L.ln1_gain = init_constant({D}, 1.0, false);
    L.ln1_bias = init_constant({D}, 0.0, false);
    L.attn.wq = init_linear(D, D, rng, false);
    L.attn.wk = init_linear(D, D, rng, false);
    L.attn.wv = init_linear(D, D, rng, false);
    L.attn.wo = init_linear(D, D, rng, false);
    L.ln2_gain = init_constant({D}, 1.0, false);
    L.ln2_bias = init_constant({D}, 0.0, false);
    L.w1 = init_linear(D, D * cfg.mlp_ratio, rng, false);
    L.b1 = init_constant({D * cfg.mlp_ratio}, 0.0, false);
    L.w2 = init_linear(D * cfg.mlp_ratio, D, rng, false);
    L.b2 = init_constant({D}, 0.0, false);
    b.layers.push_back(std::move(L));
  }
  return b;
}

FrameStack rgb_frames(const synthvid::VideoClip& clip) {
  FrameStack f{clip.frames, clip.height, clip.width, 3, {}};
  f.values.assign(clip.rgb.begin(), clip.rgb.end());
  return f;
}

FrameStack depth_frames(const synthvid::VideoClip& clip, const std::vector<float>& depth) {
  if (depth.size() != static_cast<std::size_t>(clip.frames) * clip.pixels_per_frame()) {
    throw ShapeError("depth_frames: depth buffer does not match clip T x H x W");
  }
  FrameStack f{clip.frames, clip.height, clip.width, 3, {}};
  f.values.resize(depth.size() * 3);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    f.values[3 * i] = f.values[3 * i + 1] = f.values[3 * i + 2] = depth[i];
  }
  return f;
}

Tensor extract_patches(const FrameStack& frames, std::uint32_t patch) {
  const std::size_t T = frames.frames, H = frames.height, W = frames.width,
                    C = frames.channels, p = patch;
  if (p == 0 || H % p != 0 || W % p != 0) {
    throw ShapeError("frame size " + std::to_string(H) + "x" + std::to_string(W) +
                     " is not divisible by patch " + std::to_string(p));
  }
  if (frames.values.size() != T * H * W * C) {
    throw ShapeError("extract_patches: value count does not match T x H x W x C");
  }
  const std::size_t ph = H / p, pw = W / p, feat = C * p * p;
  std::vector<double> out(T * ph * pw * feat);
  std::size_t o = 0;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t py = 0; py < ph; ++py)
      for (std::size_t px = 0; px < pw; ++px)
        for (std::size_t y = 0; y < p; ++y) {
          const double* src = frames.values.data() + ((t * H + py * p + y) * W + px * p) * C;
          for (std::size_t k = 0; k < p * C; ++k) out[o++] = src[k];
        }
  return Tensor({T * ph * pw, feat}, std::move(out));
}

Tensor TokenSequence::patch_tokens() const {
  return slice_rows(tokens, 1, static_cast<std::size_t>(frames) * patches);
}

Tensor project_patches(const Tensor& patches, const BackboneParams& backbone) {
  return linear(patches, backbone.patch_w, backbone.patch_b);
}

TokenSequence patch_embed(const FrameStack& frames, const BackboneParams& backbone) {
  const BackboneConfig& cfg = backbone.config;
  if (frames.height != cfg.height || frames.width != cfg.width) {
    throw ShapeError("patch_embed: frames are " + std::to_string(frames.height) + "x" +
                     std::to_string(frames.width) + ", backbone expects " +
                     std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  }
  if (frames.channels != cfg.channels) throw ShapeError("patch_embed: channel count differs");
  if (frames.frames == 0 || frames.frames > cfg.max_frames) {
    throw ShapeError("patch_embed: frame count " + std::to_string(frames.frames) +
                     " outside [1, " + std::to_string(cfg.max_frames) + "]");
  }
  const Tensor projected = project_patches(extract_patches(frames, cfg.patch), backbone);
  const std::size_t T = frames.frames, P = cfg.patches_per_frame(), D = cfg.dim;
  // Position embeddings are added once here and nowhere else.
  std::vector<double> pos((T * P) * D);
  const auto ps = backbone.pos_spatial.data();
  const auto pt = backbone.pos_temporal.data();
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t j = 0; j < D; ++j) pos[(t * P + p) * D + j] = ps[p * D + j] + pt[t * D + j];
  const Tensor with_pos = add(projected, Tensor({T * P, D}, std::move(pos)));
  TokenSequence seq;
  seq.tokens = concat_rows({reshape(backbone.cls_token, {1, D}), with_pos});
  seq.frames = frames.frames;
  seq.patches = static_cast<std::uint32_t>(P);
  seq.dim = static_cast<std::uint32_t>(D);
  return seq;
}

std::vector<Tensor> frozen_forward(const TokenSequence& tokens,
                                   const BackboneParams& backbone) {
  if (tokens.tokens.dim(1) != backbone.config.dim) {
    throw ShapeError("frozen_forward: token dim " + std::to_string(tokens.tokens.dim(1)) +
                     " vs backbone dim " + std::to_string(backbone.config.dim));
  }
  NoGradGuard no_grad;
  std::vector<Tensor> acts;
  acts.reserve(backbone.layers.size() + 1);
  Tensor x = tokens.tokens.detach();
  acts.push_back(x);
  for (const BackboneLayer& L : backbone.layers) {
    const Tensor h = layer_norm(x, L.ln1_gain, L.ln1_bias);
    x = add(x, multi_head_attention(h, h, L.attn, backbone.config.heads).out);
    const Tensor h2 = layer_norm(x, L.ln2_gain, L.ln2_bias);
    x = add(x, linear(gelu(linear(h2, L.w1, L.b1)), L.w2, L.b2));
    acts.push_back(x);
  }
  return acts;
}

}  // namespace dear::encoders
