#pragma once

#include <cstddef>
#include <vector>

#include "dear/tensor.hpp"

namespace dear {

struct AttentionWeights {
  Tensor wq, wk, wv, wo;  // each [d x d], no biases
};

struct AttentionResult {
  Tensor out;                    // [n_q x d]
  std::vector<Tensor> weights;   // per head, [n_q x n_kv], rows sum to 1
};

// softmax(Q_h K_h^T / sqrt(d / heads)) V_h per head, heads concatenated and
// projected by wo. Q from `query`, K and V from `context`.
AttentionResult multi_head_attention(const Tensor& query, const Tensor& context,
                                     const AttentionWeights& w, std::size_t heads);

}  // namespace dear
