#include "dear/fusion.hpp"

#include "dear/errors.hpp"
#include "dear/ops.hpp"

namespace dear::fusion {

ParamList GcaParams::named(const std::string& prefix) const {
  ParamList out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = prefix + "layer" + std::to_string(l) + ".";
    const GcaLayer& L = layers[l];
    out.push_back({p + "query_norm_gain", L.query_norm_gain});
    out.push_back({p + "query_norm_bias", L.query_norm_bias});
    out.push_back({p + "context_norm_gain", L.context_norm_gain});
    out.push_back({p + "context_norm_bias", L.context_norm_bias});
    out.push_back({p + "wq", L.attn.wq});
    out.push_back({p + "wk", L.attn.wk});
    out.push_back({p + "wv", L.attn.wv});
    out.push_back({p + "wo", L.attn.wo});
    out.push_back({p + "alpha", L.alpha});
  }
  return out;
}

GcaParams init_gca(std::uint32_t dim, std::uint32_t heads, std::uint32_t layers, Rng& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ContractError("fusion heads " + std::to_string(heads) + " must divide dim " +
                        std::to_string(dim));
  }
  GcaParams p;
  p.heads = heads;
  for (std::uint32_t l = 0; l < layers; ++l) {
    GcaLayer L;
    L.query_norm_gain = init_constant({dim}, 1.0, true);
    L.query_norm_bias = init_constant({dim}, 0.0, true);
    L.context_norm_gain = init_constant({dim}, 1.0, true);
    L.context_norm_bias = init_constant({dim}, 0.0, true);
    L.attn.wq = init_linear(dim, dim, rng, true);
    L.attn.wk = init_linear(dim, dim, rng, true);
    L.attn.wv = init_linear(dim, dim, rng, true);
    L.attn.wo = init_linear(dim, dim, rng, true);
    L.alpha = init_constant({dim}, 0.0, true);
    p.layers.push_back(std::move(L));
  }
  return p;
}

AttentionResult gca_layer(const Tensor& query_feats, const Tensor& context_feats,
                          const GcaLayer& layer, std::uint32_t heads) {
  if (query_feats.rank() != 2 || context_feats.rank() != 2 ||
      query_feats.dim(1) != context_feats.dim(1)) {
    throw ShapeError("gated cross-attention: query " + shape_str(query_feats.shape()) +
                     " vs context " + shape_str(context_feats.shape()));
  }
  const Tensor q = layer_norm(query_feats, layer.query_norm_gain, layer.query_norm_bias);
  const Tensor c = layer_norm(context_feats, layer.context_norm_gain, layer.context_norm_bias);
  AttentionResult r = multi_head_attention(q, c, layer.attn, heads);
  r.out = add(query_feats, mul_row(r.out, tanh(layer.alpha)));
  return r;
}

Tensor gated_cross_attention(const Tensor& query_feats, const Tensor& context_feats,
                             const GcaParams& params) {
  Tensor q = query_feats;
  for (const GcaLayer& layer : params.layers) {
    q = gca_layer(q, context_feats, layer, params.heads).out;
  }
  return q;
}

ParamList GcaPair::named(const std::string& prefix) const {
  ParamList out = rgb_query.named(prefix + "rgb_query.");
  for (auto& p : depth_query.named(prefix + "depth_query.")) out.push_back(std::move(p));
  return out;
}

std::pair<Tensor, Tensor> bidirectional_fuse(const Tensor& rgb_feats, const Tensor& depth_feats,
                                             const GcaPair& params) {
  if (params.rgb_query.layers.size() != params.depth_query.layers.size()) {
    throw ContractError("bidirectional_fuse: direction layer counts differ");
  }
  Tensor rgb = rgb_feats;
  Tensor depth = depth_feats;
  for (std::size_t l = 0; l < params.rgb_query.layers.size(); ++l) {
    Tensor next_rgb = gca_layer(rgb, depth, params.rgb_query.layers[l], params.rgb_query.heads).out;
    Tensor next_depth =
        gca_layer(depth, rgb, params.depth_query.layers[l], params.depth_query.heads).out;
    rgb = std::move(next_rgb);
    depth = std::move(next_depth);
  }
  return {rgb, depth};
}

ParamList StreamHead::named(const std::string& prefix) const {
  return {{prefix + "w", w}, {prefix + "b", b}};
}

StreamHead init_head(std::uint32_t in_dim, std::uint32_t num_classes, Rng& rng) {
  return {init_linear(in_dim, num_classes, rng, true), init_constant({num_classes}, 0.0, true)};
}

Tensor stream_logits(const Tensor& rgb_ctx, const Tensor& depth_ctx, const StreamHead& head) {
  const std::size_t d = rgb_ctx.dim(1);
  const Tensor pooled = concat_cols({reshape(mean_rows(rgb_ctx), {1, d}),
                                     reshape(mean_rows(depth_ctx), {1, depth_ctx.dim(1)})});
  if (head.w.dim(0) != pooled.dim(1)) {
    throw ShapeError("stream head expects " + std::to_string(head.w.dim(0)) +
                     " features, got " + std::to_string(pooled.dim(1)));
  }
  return reshape(linear(pooled, head.w, head.b), {head.num_classes()});
}

Tensor unimodal_logits(const Tensor& feats, const StreamHead& head) {
  const Tensor pooled = reshape(mean_rows(feats), {1, feats.dim(1)});
  if (head.w.dim(0) != pooled.dim(1)) {
    throw ShapeError("stream head expects " + std::to_string(head.w.dim(0)) +
                     " features, got " + std::to_string(pooled.dim(1)));
  }
  return reshape(linear(pooled, head.w, head.b), {head.num_classes()});
}

Tensor mean_fuse(const Tensor& logits_a, const Tensor& logits_b) {
  if (logits_a.shape() != logits_b.shape()) {
    throw ShapeError("mean_fuse: " + shape_str(logits_a.shape()) + " vs " +
                     shape_str(logits_b.shape()));
  }
  return mean_of({logits_a, logits_b});
}

}  // namespace dear::fusion
