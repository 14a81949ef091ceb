#pragma once

#include <cstddef>
#include <vector>

#include "dear/tensor.hpp"

// Differentiable tensor ops. All ops accept arbitrary ranks where they act
// elementwise; "row" ops treat a tensor as (numel / d) x d with d the last
// dimension. No general broadcasting.
namespace dear {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor neg(const Tensor& a);
// x * s where s is a one-element tensor (e.g. a trainable fusion scalar).
Tensor mul_scalar(const Tensor& x, const Tensor& s);

// x[..., d] + b[d]
Tensor add_row(const Tensor& x, const Tensor& b);
// x[..., d] * g[d]
Tensor mul_row(const Tensor& x, const Tensor& g);

// a[m x k] . b[k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m x k] . b[n x k]^T, without materialising the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// x[n x in] . w[in x out] (+ b[out] when defined)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = Tensor());

// Numerically stable softmax over the last axis. NaN input -> NumericError.
Tensor softmax(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// GELU, tanh approximation.
Tensor gelu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

// Sum of all elements -> [1].
Tensor sum(const Tensor& x);
// Mean over the first axis of an [n x d] tensor -> [d].
Tensor mean_rows(const Tensor& x);
// Elementwise mean of equally shaped tensors.
Tensor mean_of(const std::vector<Tensor>& xs);

Tensor reshape(const Tensor& x, Shape shape);
// Concatenate 2-D tensors with equal row counts along columns.
Tensor concat_cols(const std::vector<Tensor>& xs);
// Concatenate tensors with equal trailing dims along the first axis.
Tensor concat_rows(const std::vector<Tensor>& xs);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t len);
// Reverse the order of rows of an [n x d] tensor.
Tensor reverse_rows(const Tensor& x);

// Depthwise causal convolution along rows of x[L x C]:
//   y[t][c] = bias[c] + sum_j w[c][j] * x[t - (K-1) + j][c], zero-padded.
Tensor causal_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Mean cross-entropy between one-hot labels y[B x C] and probabilities
// p[B x C]: -(1/B) sum y log(max(p, 1e-12)). Rows of y must be one-hot.
Tensor cross_entropy(const Tensor& labels, const Tensor& probs);

inline constexpr double kProbClamp = 1e-12;

}  // namespace dear
