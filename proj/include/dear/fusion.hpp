#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dear/attention.hpp"
#include "dear/params.hpp"
#include "dear/rng.hpp"
#include "dear/tensor.hpp"

namespace dear::fusion {

struct GcaLayer {
  Tensor query_norm_gain, query_norm_bias;
  Tensor context_norm_gain, context_norm_bias;
  AttentionWeights attn;  // [d x d] each
  Tensor alpha;           // [d]; gate is tanh(alpha), zero at init
};

struct GcaParams {
  std::uint32_t heads = 2;
  std::vector<GcaLayer> layers;

  ParamList named(const std::string& prefix) const;
};

GcaParams init_gca(std::uint32_t dim, std::uint32_t heads, std::uint32_t layers, Rng& rng);

// One direction of fusion, applied layer by layer:
//   q <- q + tanh(alpha) * MHA(Q = norm(q), K = V = norm(context)).
Tensor gated_cross_attention(const Tensor& query_feats, const Tensor& context_feats,
                             const GcaParams& params);

// Single layer, also returning the per-head attention weights.
AttentionResult gca_layer(const Tensor& query_feats, const Tensor& context_feats,
                          const GcaLayer& layer, std::uint32_t heads);

// The two directions of one stream, with independent parameters.
struct GcaPair {
  GcaParams rgb_query;    // RGB queries depth
  GcaParams depth_query;  // depth queries RGB

  ParamList named(const std::string& prefix) const;
};

// (rgb_ctx, depth_ctx). Each layer reads both previous-layer outputs, so the
// evaluation order of the two directions does not matter.
std::pair<Tensor, Tensor> bidirectional_fuse(const Tensor& rgb_feats, const Tensor& depth_feats,
                                             const GcaPair& params);

struct StreamHead {
  Tensor w;  // [in x C]
  Tensor b;  // [C]

  ParamList named(const std::string& prefix) const;
  std::size_t num_classes() const { return b.numel(); }
};

StreamHead init_head(std::uint32_t in_dim, std::uint32_t num_classes, Rng& rng);

// Mean-pool both token sets, concatenate [rgb ; depth], apply the head.
Tensor stream_logits(const Tensor& rgb_ctx, const Tensor& depth_ctx, const StreamHead& head);
// Single-modality variant used by the RGB-only model.
Tensor unimodal_logits(const Tensor& feats, const StreamHead& head);

// Elementwise (a + b) / 2.
Tensor mean_fuse(const Tensor& logits_a, const Tensor& logits_b);

}  // namespace dear::fusion
