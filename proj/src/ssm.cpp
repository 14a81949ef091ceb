#include "dear/ssm.hpp"

#include <cmath>
#include <string>

#include "dear/errors.hpp"
#include "dear/ops.hpp"

namespace dear::ssm {

void ScanInputs::validate() const {
  if (len == 0) throw ContractError("selective scan: sequence length must be >= 1");
  if (channels == 0 || state == 0) throw ShapeError("selective scan: empty channel/state dim");
  if (x.size() != len * channels || delta.size() != len * channels ||
      a.size() != channels * state || b.size() != len * state ||
      c.size() != len * state || d_skip.size() != channels) {
    throw ShapeError("selective scan: buffer sizes do not match (len=" + std::to_string(len) +
                     ", channels=" + std::to_string(channels) +
                     ", state=" + std::to_string(state) + ")");
  }
}

namespace {

void check_finite(const std::vector<double>& v, const char* what) {
  for (double e : v) {
    if (!std::isfinite(e)) throw NumericError(std::string("selective scan: non-finite ") + what);
  }
}

// Runs the recurrence over rows [begin, end) starting from state `h`
// (updated in place). Writes C_t . h_t into y (without the skip term) and,
// when `decay` is non-null, the running product of exp(delta * A) per state.
void scan_range(const ScanInputs& in, std::size_t begin, std::size_t end, double* h,
                double* y, double* decay, double* states) {
  const std::size_t C = in.channels, N = in.state;
  for (std::size_t t = begin; t < end; ++t) {
    const double* bt = in.b.data() + t * N;
    const double* ct = in.c.data() + t * N;
    for (std::size_t ch = 0; ch < C; ++ch) {
      const double dt = in.delta[t * C + ch];
      const double xt = in.x[t * C + ch];
      const double* arow = in.a.data() + ch * N;
      double* hrow = h + ch * N;
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double abar = std::exp(dt * arow[n]);
        hrow[n] = abar * hrow[n] + dt * bt[n] * xt;
        acc += ct[n] * hrow[n];
        if (decay) decay[(t * C + ch) * N + n] = abar * (t == begin ? 1.0 : decay[((t - 1) * C + ch) * N + n]);
      }
      y[t * C + ch] = acc;
      if (states) std::copy_n(hrow, N, states + (t * C + ch) * N);
    }
  }
}

ScanInputs inputs_from(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b,
                       const Tensor& c, const Tensor& d_skip) {
  if (x.rank() != 2 || a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("selective_scan: x, A, B must be 2-D");
  }
  ScanInputs in;
  in.len = x.dim(0);
  in.channels = x.dim(1);
  in.state = a.dim(1);
  in.x.assign(x.data().begin(), x.data().end());
  in.delta.assign(delta.data().begin(), delta.data().end());
  in.a.assign(a.data().begin(), a.data().end());
  in.b.assign(b.data().begin(), b.data().end());
  in.c.assign(c.data().begin(), c.data().end());
  in.d_skip.assign(d_skip.data().begin(), d_skip.data().end());
  in.validate();
  return in;
}

}  // namespace

std::vector<double> scan_sequential(const ScanInputs& in) {
  in.validate();
  const std::size_t C = in.channels;
  std::vector<double> h(C * in.state, 0.0);
  std::vector<double> y(in.len * C);
  scan_range(in, 0, in.len, h.data(), y.data(), nullptr, nullptr);
  for (std::size_t t = 0; t < in.len; ++t)
    for (std::size_t ch = 0; ch < C; ++ch) y[t * C + ch] += in.d_skip[ch] * in.x[t * C + ch];
  check_finite(y, "output");
  return y;
}

std::vector<double> scan_final_state(const ScanInputs& in) {
  in.validate();
  std::vector<double> h(in.channels * in.state, 0.0);
  std::vector<double> y(in.len * in.channels);
  scan_range(in, 0, in.len, h.data(), y.data(), nullptr, nullptr);
  check_finite(h, "state");
  return h;
}

std::vector<double> scan_blocked(const ScanInputs& in, std::size_t block) {
  in.validate();
  if (block == 0) throw ContractError("scan_blocked: block size must be >= 1");
  const std::size_t C = in.channels, N = in.state, L = in.len;
  std::vector<double> local_y(L * C);
  std::vector<double> decay(L * C * N);
  std::vector<double> local_h(L * C * N);
  // Phase 1: each block from a zero state; blocks are independent.
  for (std::size_t begin = 0; begin < L; begin += block) {
    const std::size_t end = std::min(L, begin + block);
    std::vector<double> h(C * N, 0.0);
    scan_range(in, begin, end, h.data(), local_y.data(), decay.data(), local_h.data());
  }
  // Phase 2: carry the state entering each block and correct its outputs.
  std::vector<double> y(L * C);
  std::vector<double> carry(C * N, 0.0);
  for (std::size_t begin = 0; begin < L; begin += block) {
    const std::size_t end = std::min(L, begin + block);
    for (std::size_t t = begin; t < end; ++t) {
      const double* ct = in.c.data() + t * N;
      for (std::size_t ch = 0; ch < C; ++ch) {
        const double* P = decay.data() + (t * C + ch) * N;
        double corr = 0.0;
        for (std::size_t n = 0; n < N; ++n) corr += ct[n] * P[n] * carry[ch * N + n];
        y[t * C + ch] = local_y[t * C + ch] + corr + in.d_skip[ch] * in.x[t * C + ch];
      }
    }
    const std::size_t last = end - 1;
    for (std::size_t i = 0; i < C * N; ++i) {
      carry[i] = local_h[last * C * N + i] + decay[last * C * N + i] * carry[i];
    }
  }
  check_finite(y, "output");
  return y;
}

Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b,
                      const Tensor& c, const Tensor& d_skip) {
  ScanInputs in = inputs_from(x, delta, a, b, c, d_skip);
  check_finite(in.x, "input");
  check_finite(in.delta, "delta");
  const std::size_t L = in.len, C = in.channels, N = in.state;
  std::vector<double> h(C * N, 0.0);
  std::vector<double> y(L * C);
  std::vector<double> states(L * C * N);
  scan_range(in, 0, L, h.data(), y.data(), nullptr, states.data());
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t ch = 0; ch < C; ++ch) y[t * C + ch] += in.d_skip[ch] * in.x[t * C + ch];
  check_finite(y, "output");
  return make_result(
      {L, C}, std::move(y), "selective_scan", {x, delta, a, b, c, d_skip},
      [L, C, N, states = std::move(states)](const TensorImpl& o, const std::vector<Tensor>& ins) {
        const double* X = ins[0].data().data();
        const double* Dt = ins[1].data().data();
        const double* A = ins[2].data().data();
        const double* B = ins[3].data().data();
        const double* Cm = ins[4].data().data();
        const double* Ds = ins[5].data().data();
        double* gx = grad_buffer(ins[0]);
        double* gdt = grad_buffer(ins[1]);
        double* ga = grad_buffer(ins[2]);
        double* gb = grad_buffer(ins[3]);
        double* gc = grad_buffer(ins[4]);
        double* gd = grad_buffer(ins[5]);
        std::vector<double> dh(C * N, 0.0);
        for (std::size_t t = L; t-- > 0;) {
          const double* bt = B + t * N;
          const double* ct = Cm + t * N;
          for (std::size_t ch = 0; ch < C; ++ch) {
            const double gy = o.grad[t * C + ch];
            const double xt = X[t * C + ch];
            const double dt = Dt[t * C + ch];
            if (gd) gd[ch] += gy * xt;
            double gxt = gy * Ds[ch];
            double gdtt = 0.0;
            const double* ht = states.data() + (t * C + ch) * N;
            const double* hprev = t > 0 ? states.data() + ((t - 1) * C + ch) * N : nullptr;
            const double* arow = A + ch * N;
            double* dhr = dh.data() + ch * N;
            for (std::size_t n = 0; n < N; ++n) {
              if (gc) gc[t * N + n] += gy * ht[n];
              dhr[n] += gy * ct[n];
              const double abar = std::exp(dt * arow[n]);
              const double hp = hprev ? hprev[n] : 0.0;
              const double g = dhr[n];
              gdtt += g * (arow[n] * abar * hp + bt[n] * xt);
              if (ga) ga[ch * N + n] += g * dt * abar * hp;
              if (gb) gb[t * N + n] += g * dt * xt;
              gxt += g * dt * bt[n];
              dhr[n] = g * abar;
            }
            if (gx) gx[t * C + ch] += gxt;
            if (gdt) gdt[t * C + ch] += gdtt;
          }
        }
      });
}

Tensor bidirectional_scan(const Tensor& x, const Tensor& delta, const Tensor& a,
                          const Tensor& b, const Tensor& c, const Tensor& d_skip) {
  const Tensor forward = selective_scan(x, delta, a, b, c, d_skip);
  const Tensor backward_dir = reverse_rows(selective_scan(
      reverse_rows(x), reverse_rows(delta), a, reverse_rows(b), reverse_rows(c), d_skip));
  return mean_of({forward, backward_dir});
}

ParamList SsmParams::named(const std::string& prefix) const {
  ParamList out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = prefix + "block" + std::to_string(i) + ".";
    const SsmBlock& B = blocks[i];
    out.push_back({p + "norm_gain", B.norm_gain});
    out.push_back({p + "norm_bias", B.norm_bias});
    out.push_back({p + "w_in", B.w_in});
    out.push_back({p + "conv_w", B.conv_w});
    out.push_back({p + "conv_b", B.conv_b});
    out.push_back({p + "w_dt_down", B.w_dt_down});
    out.push_back({p + "w_dt_up", B.w_dt_up});
    out.push_back({p + "dt_bias", B.dt_bias});
    out.push_back({p + "w_b", B.w_b});
    out.push_back({p + "w_c", B.w_c});
    out.push_back({p + "a_log", B.a_log});
    out.push_back({p + "d_skip", B.d_skip});
    out.push_back({p + "w_out", B.w_out});
  }
  out.push_back({prefix + "norm_gain", norm_gain});
  out.push_back({prefix + "norm_bias", norm_bias});
  out.push_back({prefix + "proj_w", proj_w});
  out.push_back({prefix + "proj_b", proj_b});
  return out;
}

SsmParams init_ssm(const SsmConfig& cfg, Rng& rng) {
  if (cfg.model_dim == 0 || cfg.expand == 0 || cfg.state == 0 || cfg.conv_kernel == 0 ||
      cfg.out_dim == 0 || cfg.dt_rank == 0) {
    throw ContractError("SsmConfig: all dimensions must be >= 1");
  }
  const std::size_t D = cfg.model_dim, E = cfg.inner(), N = cfg.state, K = cfg.conv_kernel,
                    R = cfg.dt_rank;
  SsmParams p;
  p.config = cfg;
  for (std::uint32_t i = 0; i < cfg.blocks; ++i) {
    SsmBlock B;
    B.norm_gain = init_constant({D}, 1.0, true);
    B.norm_bias = init_constant({D}, 0.0, true);
    B.w_in = init_linear(D, 2 * E, rng, true);
    B.conv_w = init_normal({E, K}, 1.0 / std::sqrt(static_cast<double>(K)), rng, true);
    B.conv_b = init_constant({E}, 0.0, true);
    B.w_dt_down = init_linear(E, R, rng, true);
    B.w_dt_up = init_linear(R, E, rng, true);
    // softplus(dt_bias) log-uniform in [1e-3, 1e-1].
    std::vector<double> dt_bias(E);
    for (double& v : dt_bias) {
      const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
      v = dt + std::log(-std::expm1(-dt));
    }
    B.dt_bias = Tensor({E}, std::move(dt_bias), true);
    B.w_b = init_linear(E, N, rng, true);
    B.w_c = init_linear(E, N, rng, true);
    // A = -(n + 1) per state index.
    std::vector<double> a_log(E * N);
    for (std::size_t ch = 0; ch < E; ++ch)
      for (std::size_t n = 0; n < N; ++n) a_log[ch * N + n] = std::log(static_cast<double>(n + 1));
    B.a_log = Tensor({E, N}, std::move(a_log), true);
    B.d_skip = init_constant({E}, 1.0, true);
    B.w_out = init_linear(E, D, rng, true);
    p.blocks.push_back(std::move(B));
  }
  p.norm_gain = init_constant({D}, 1.0, true);
  p.norm_bias = init_constant({D}, 0.0, true);
  p.proj_w = init_linear(D, cfg.out_dim, rng, true);
  p.proj_b = init_constant({cfg.out_dim}, 0.0, true);
  return p;
}

Tensor ssm_block(const Tensor& u, const SsmBlock& block, const SsmConfig& cfg) {
  const std::size_t E = cfg.inner();
  const Tensor z = layer_norm(u, block.norm_gain, block.norm_bias);
  const Tensor xz = matmul(z, block.w_in);
  const Tensor x = silu(causal_conv1d(slice_cols(xz, 0, E), block.conv_w, block.conv_b));
  const Tensor gate = slice_cols(xz, E, E);
  const Tensor delta =
      softplus(add_row(matmul(matmul(x, block.w_dt_down), block.w_dt_up), block.dt_bias));
  const Tensor b = matmul(x, block.w_b);
  const Tensor c = matmul(x, block.w_c);
  const Tensor a = neg(exp(block.a_log));
  const Tensor y = bidirectional_scan(x, delta, a, b, c, block.d_skip);
  return add(u, matmul(mul(y, silu(gate)), block.w_out));
}

Tensor mamba_tokens(const Tensor& patch_tokens, const SsmParams& ssm) {
  if (patch_tokens.rank() != 2 || patch_tokens.dim(1) != ssm.config.model_dim) {
    throw ShapeError("mamba encoder: tokens " + shape_str(patch_tokens.shape()) +
                     " vs model dim " + std::to_string(ssm.config.model_dim));
  }
  Tensor u = patch_tokens;
  for (const SsmBlock& block : ssm.blocks) u = ssm_block(u, block, ssm.config);
  return linear(layer_norm(u, ssm.norm_gain, ssm.norm_bias), ssm.proj_w, ssm.proj_b);
}

Tensor mamba_tokens(const encoders::TokenSequence& tokens, const SsmParams& ssm) {
  return mamba_tokens(tokens.patch_tokens(), ssm);
}

Tensor mamba_encode(const encoders::TokenSequence& tokens, const SsmParams& ssm) {
  return mean_rows(mamba_tokens(tokens, ssm));
}

}  // namespace dear::ssm
