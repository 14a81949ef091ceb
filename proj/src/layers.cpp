#include <cmath>
#include <string>

#include "dear/attention.hpp"
#include "dear/errors.hpp"
#include "dear/ops.hpp"
#include "dear/params.hpp"

namespace dear {

Tensor init_normal(Shape shape, double stddev, Rng& rng, bool trainable) {
  std::vector<double> data(numel(shape));
  for (double& v : data) v = stddev * rng.normal();
  return Tensor(std::move(shape), std::move(data), trainable);
}

Tensor init_linear(std::size_t fan_in, std::size_t fan_out, Rng& rng, bool trainable) {
  return init_normal({fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng,
                     trainable);
}

Tensor init_constant(Shape shape, double value, bool trainable) {
  return Tensor::full(std::move(shape), value, trainable);
}

std::size_t count_elements(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

AttentionResult multi_head_attention(const Tensor& query, const Tensor& context,
                                     const AttentionWeights& w, std::size_t heads) {
  const std::size_t d = query.dim(1);
  if (context.dim(1) != d) {
    throw ShapeError("attention: query dim " + std::to_string(d) + " vs context dim " +
                     std::to_string(context.dim(1)));
  }
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("attention: dim " + std::to_string(d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t hd = d / heads;
  const Tensor q = matmul(query, w.wq);
  const Tensor k = matmul(context, w.wk);
  const Tensor v = matmul(context, w.wv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  AttentionResult result;
  std::vector<Tensor> head_outs;
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = heads == 1 ? q : slice_cols(q, h * hd, hd);
    const Tensor kh = heads == 1 ? k : slice_cols(k, h * hd, hd);
    const Tensor vh = heads == 1 ? v : slice_cols(v, h * hd, hd);
    Tensor attn = softmax(scale(matmul_nt(qh, kh), inv_sqrt));
    head_outs.push_back(matmul(attn, vh));
    result.weights.push_back(std::move(attn));
  }
  const Tensor merged = heads == 1 ? head_outs.front() : concat_cols(head_outs);
  result.out = matmul(merged, w.wo);
  return result;
}

}  // namespace dear
