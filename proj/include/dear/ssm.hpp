#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dear/encoders.hpp"
#include "dear/params.hpp"
#include "dear/rng.hpp"
#include "dear/tensor.hpp"

// Selective state-space (Mamba-style) encoder for the second depth branch.
namespace dear::ssm {

// Plain-array inputs of one selective scan, all row-major:
//   x, delta: [len x channels]; a: [channels x state] (negative);
//   b, c: [len x state]; d_skip: [channels].
struct ScanInputs {
  std::size_t len = 0, channels = 0, state = 0;
  std::vector<double> x, delta, a, b, c, d_skip;

  void validate() const;
};

// h_t = exp(delta_t * A) h_{t-1} + delta_t * B_t * x_t, h_0 = 0;
// y_t = C_t . h_t + D * x_t. Sequential reference recurrence: [len x channels].
std::vector<double> scan_sequential(const ScanInputs& in);
// Same recurrence evaluated block-wise: independent local scans from a zero
// state, then a carry pass that adds the decayed state entering each block.
std::vector<double> scan_blocked(const ScanInputs& in, std::size_t block);
// Final hidden states h_len for every (channel, state) pair.
std::vector<double> scan_final_state(const ScanInputs& in);

// Differentiable scan over tensors with the shapes of ScanInputs.
Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& a,
                      const Tensor& b, const Tensor& c, const Tensor& d_skip);

// Forward-direction scan and reversed-sequence scan, averaged.
Tensor bidirectional_scan(const Tensor& x, const Tensor& delta, const Tensor& a,
                          const Tensor& b, const Tensor& c, const Tensor& d_skip);

struct SsmConfig {
  std::uint32_t model_dim = 64;  // token dim D from the patch embedding
  std::uint32_t expand = 2;      // E
  std::uint32_t state = 8;       // N
  std::uint32_t conv_kernel = 4;
  std::uint32_t blocks = 2;      // M
  std::uint32_t out_dim = 16;    // matched to the side-network dim d
  std::uint32_t dt_rank = 4;

  std::uint32_t inner() const { return expand * model_dim; }
  bool operator==(const SsmConfig&) const = default;
};

struct SsmBlock {
  Tensor norm_gain, norm_bias;
  Tensor w_in;               // [D x 2*E*D] -> (x, gate)
  Tensor conv_w, conv_b;     // [E*D x K], [E*D]
  Tensor w_dt_down, w_dt_up, dt_bias;  // low-rank delta projection
  Tensor w_b, w_c;           // [E*D x N]
  Tensor a_log;              // [E*D x N]; A = -exp(a_log) < 0
  Tensor d_skip;             // [E*D]
  Tensor w_out;              // [E*D x D]
};

struct SsmParams {
  SsmConfig config;
  std::vector<SsmBlock> blocks;
  Tensor norm_gain, norm_bias;
  Tensor proj_w, proj_b;  // [D x d], [d]

  ParamList named(const std::string& prefix) const;
};

SsmParams init_ssm(const SsmConfig& cfg, Rng& rng);

// One residual block over a [len x D] sequence.
Tensor ssm_block(const Tensor& u, const SsmBlock& block, const SsmConfig& cfg);

// Frame-major patch tokens (class token excluded) through all blocks, final
// norm and projection to d: [T*P x d].
Tensor mamba_tokens(const encoders::TokenSequence& tokens, const SsmParams& ssm);
// Same, from an already extracted [T*P x D] patch-token tensor.
Tensor mamba_tokens(const Tensor& patch_tokens, const SsmParams& ssm);
// Mean-pooled mamba_tokens: [d].
Tensor mamba_encode(const encoders::TokenSequence& tokens, const SsmParams& ssm);

}  // namespace dear::ssm
