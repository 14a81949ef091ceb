#include <string>

#include "dear/encoders.hpp"
#include "dear/errors.hpp"
#include "dear/ops.hpp"

namespace dear::encoders {

ParamList SideNetParams::named(const std::string& prefix) const {
  ParamList out;
  for (std::size_t l = 0; l < down_w.size(); ++l) {
    out.push_back({prefix + "down" + std::to_string(l) + ".w", down_w[l]});
    out.push_back({prefix + "down" + std::to_string(l) + ".b", down_b[l]});
  }
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string p = prefix + "block" + std::to_string(l) + ".";
    const SideBlock& B = blocks[l];
    out.push_back({p + "ln1_gain", B.ln1_gain});
    out.push_back({p + "ln1_bias", B.ln1_bias});
    out.push_back({p + "wq", B.attn.wq});
    out.push_back({p + "wk", B.attn.wk});
    out.push_back({p + "wv", B.attn.wv});
    out.push_back({p + "wo", B.attn.wo});
    out.push_back({p + "ln2_gain", B.ln2_gain});
    out.push_back({p + "ln2_bias", B.ln2_bias});
    out.push_back({p + "w1", B.w1});
    out.push_back({p + "b1", B.b1});
    out.push_back({p + "w2", B.w2});
    out.push_back({p + "b2", B.b2});
    out.push_back({p + "fusion", fusion[l]});
  }
  out.push_back({prefix + "norm_gain", norm_gain});
  out.push_back({prefix + "norm_bias", norm_bias});
  return out;
}

SideNetParams init_side_network(const SideConfig& cfg, const BackboneConfig& backbone,
                                Rng& rng) {
  if (cfg.dim == 0 || cfg.heads == 0 || cfg.dim % cfg.heads != 0) {
    throw ContractError("SideConfig.heads: must divide side dim " + std::to_string(cfg.dim));
  }
  const std::size_t D = backbone.dim, d = cfg.dim, hidden = d * cfg.mlp_ratio;
  SideNetParams s;
  s.config = cfg;
  for (std::uint32_t l = 0; l <= backbone.layers; ++l) {
    s.down_w.push_back(init_linear(D, d, rng, true));
    s.down_b.push_back(init_constant({d}, 0.0, true));
  }
  for (std::uint32_t l = 0; l < backbone.layers; ++l) {
    SideBlock B;
    B.ln1_gain = init_constant({d}, 1.0, true);
    B.ln1_bias = init_constant({d}, 0.0, true);
    B.attn.wq = init_linear(d, d, rng, true);
    B.attn.wk = init_linear(d, d, rng, true);
    B.attn.wv = init_linear(d, d, rng, true);
    B.attn.wo = init_linear(d, d, rng, true);
    B.ln2_gain = init_constant({d}, 1.0, true);
    B.ln2_bias = init_constant({d}, 0.0, true);
    B.w1 = init_linear(d, hidden, rng, true);
    B.b1 = init_constant({hidden}, 0.0, true);
    B.w2 = init_linear(hidden, d, rng, true);
    B.b2 = init_constant({d}, 0.0, true);
    s.blocks.push_back(std::move(B));
    s.fusion.push_back(init_constant({1}, 1.0, true));
  }
  s.norm_gain = init_constant({d}, 1.0, true);
  s.norm_bias = init_constant({d}, 0.0, true);
  return s;
}

Tensor side_tokens(const std::vector<Tensor>& per_layer_acts, const SideNetParams& side) {
  if (per_layer_acts.size() != side.down_w.size() ||
      side.blocks.size() + 1 != side.down_w.size()) {
    throw ContractError("side network: " + std::to_string(per_layer_acts.size()) +
                        " backbone activations for " + std::to_string(side.down_w.size()) +
                        " side taps");
  }
  Tensor s = linear(per_layer_acts[0], side.down_w[0], side.down_b[0]);
  for (std::size_t l = 0; l < side.blocks.size(); ++l) {
    const SideBlock& B = side.blocks[l];
    const Tensor h = layer_norm(s, B.ln1_gain, B.ln1_bias);
    Tensor x = add(s, multi_head_attention(h, h, B.attn, side.config.heads).out);
    const Tensor h2 = layer_norm(x, B.ln2_gain, B.ln2_bias);
    x = add(x, linear(gelu(linear(h2, B.w1, B.b1)), B.w2, B.b2));
    const Tensor tap = linear(per_layer_acts[l + 1], side.down_w[l + 1], side.down_b[l + 1]);
    s = add(x, mul_scalar(tap, side.fusion[l]));
  }
  return layer_norm(s, side.norm_gain, side.norm_bias);
}

Tensor side_forward(const std::vector<Tensor>& per_layer_acts, const SideNetParams& side) {
  return mean_rows(side_tokens(per_layer_acts, side));
}

}  // namespace dear::encoders
