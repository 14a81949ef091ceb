#include "dear/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dear/errors.hpp"

namespace dear {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()) + " differ");
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_str(a.shape()));
  }
}

std::size_t last_dim(const Tensor& x) { return x.shape().back(); }

// Applies f elementwise; backward multiplies by df(x, y).
template <typename F, typename DF>
Tensor unary(const Tensor& x, const char* op, F f, DF df) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(x.shape(), std::move(out), op, {x},
                     [df](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       double* gx = grad_buffer(ins[0]);
                       if (!gx) return;
                       const auto xd = ins[0].data();
                       for (std::size_t i = 0; i < xd.size(); ++i) {
                         gx[i] += o.grad[i] * df(xd[i], o.data[i]);
                       }
                     });
}

constexpr double kSqrt2OverPi = 0.7978845608028654;
constexpr double kGeluCubic = 0.044715;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return make_result(a.shape(), std::move(out), "add", {a, b},
                     [](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       for (const Tensor& in : ins) {
                         if (double* g = grad_buffer(in)) {
                           for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
                         }
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return make_result(a.shape(), std::move(out), "sub", {a, b},
                     [](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       if (double* g = grad_buffer(ins[0])) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
                       }
                       if (double* g = grad_buffer(ins[1])) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return make_result(a.shape(), std::move(out), "mul", {a, b},
                     [](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       const auto ad = ins[0].data();
                       const auto bd = ins[1].data();
                       if (double* g = grad_buffer(ins[0])) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * bd[i];
                       }
                       if (double* g = grad_buffer(ins[1])) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * ad[i];
                       }
                     });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, "scale", [s](double v) { return v * s; },
               [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) {
    throw ShapeError("mul_scalar: scale must hold one value, got " + shape_str(s.shape()));
  }
  const double sv = s.data()[0];
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * sv;
  return make_result(x.shape(), std::move(out), "mul_scalar", {x, s},
                     [](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       const auto xd = ins[0].data();
                       const double sv = ins[1].data()[0];
                       if (double* g = grad_buffer(ins[0])) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * sv;
                       }
                       if (double* g = grad_buffer(ins[1])) {
                         double acc = 0.0;
                         for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * xd[i];
                         g[0] += acc;
                       }
                     });
}

Tensor add_row(const Tensor& x, const Tensor& b) {
  require_rank(b, 1, "add_row");
  const std::size_t d = last_dim(x);
  if (b.dim(0) != d) {
    throw ShapeError("add_row: " + shape_str(x.shape()) + " vs bias " + shape_str(b.shape()));
  }
  const auto xd = x.data();
  const auto bd = b.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] + bd[i % d];
  return make_result(x.shape(), std::move(out), "add_row", {x, b},
                     [d](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       if (double* g = grad_buffer(ins[0])) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
                       }
                       if (double* g = grad_buffer(ins[1])) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % d] += o.grad[i];
                       }
                     });
}

Tensor mul_row(const Tensor& x, const Tensor& gvec) {
  require_rank(gvec, 1, "mul_row");
  const std::size_t d = last_dim(x);
  if (gvec.dim(0) != d) {
    throw ShapeError("mul_row: " + shape_str(x.shape()) + " vs " + shape_str(gvec.shape()));
  }
  const auto xd = x.data();
  const auto gd = gvec.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * gd[i % d];
  return make_result(x.shape(), std::move(out), "mul_row", {x, gvec},
                     [d](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       const auto xd = ins[0].data();
                       const auto gd = ins[1].data();
                       if (double* g = grad_buffer(ins[0])) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * gd[i % d];
                       }
                       if (double* g = grad_buffer(ins[1])) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % d] += o.grad[i] * xd[i];
                       }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ: " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  const double* A = a.data().data();
  const double* B = b.data().data();
  std::vector<double> out(m * n, 0.0);
  double* C = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = A[i * k + t];
      const double* brow = B + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return make_result(
      {m, n}, std::move(out), "matmul", {a, b},
      [m, k, n](const TensorImpl& o, const std::vector<Tensor>& ins) {
        const double* A = ins[0].data().data();
        const double* B = ins[1].data().data();
        const double* dC = o.grad.data();
        if (double* dA = grad_buffer(ins[0])) {
          // dA = dC . B^T
          for (std::size_t i = 0; i < m; ++i) {
            const double* gc = dC + i * n;
            for (std::size_t t = 0; t < k; ++t) {
              const double* brow = B + t * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += gc[j] * brow[j];
              dA[i * k + t] += acc;
            }
          }
        }
        if (double* dB = grad_buffer(ins[1])) {
          // dB = A^T . dC
          for (std::size_t i = 0; i < m; ++i) {
            const double* gc = dC + i * n;
            for (std::size_t t = 0; t < k; ++t) {
              const double av = A[i * k + t];
              double* gb = dB + t * n;
              for (std::size_t j = 0; j < n; ++j) gb[j] += av * gc[j];
            }
          }
        }
      });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw ShapeError("matmul_nt: inner dimensions differ: " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()) + "^T");
  }
  const double* A = a.data().data();
  const double* B = b.data().data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = B + j * k;
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
      out[i * n + j] = acc;
    }
  }
  return make_result(
      {m, n}, std::move(out), "matmul_nt", {a, b},
      [m, k, n](const TensorImpl& o, const std::vector<Tensor>& ins) {
        const double* A = ins[0].data().data();
        const double* B = ins[1].data().data();
        const double* dC = o.grad.data();
        if (double* dA = grad_buffer(ins[0])) {
          for (std::size_t i = 0; i < m; ++i) {
            double* ga = dA + i * k;
            for (std::size_t j = 0; j < n; ++j) {
              const double g = dC[i * n + j];
              const double* brow = B + j * k;
              for (std::size_t t = 0; t < k; ++t) ga[t] += g * brow[t];
            }
          }
        }
        if (double* dB = grad_buffer(ins[1])) {
          for (std::size_t i = 0; i < m; ++i) {
            const double* arow = A + i * k;
            for (std::size_t j = 0; j < n; ++j) {
              const double g = dC[i * n + j];
              double* gb = dB + j * k;
              for (std::size_t t = 0; t < k; ++t) gb[t] += g * arow[t];
            }
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  const auto ad = a.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = ad[i * c + j];
  return make_result({c, r}, std::move(out), "transpose", {a},
                     [r, c](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       double* g = grad_buffer(ins[0]);
                       if (!g) return;
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
                     });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w);
  return b.defined() ? add_row(y, b) : y;
}

Tensor softmax(const Tensor& x) {
  const std::size_t d = last_dim(x);
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * d;
    double* y = out.data() + r * d;
    double mx = in[0];
    for (std::size_t j = 0; j < d; ++j) {
      if (std::isnan(in[j])) throw NumericError("softmax: NaN input");
      mx = std::max(mx, in[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      y[j] = std::exp(in[j] - mx);
      total += y[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < d; ++j) y[j] *= inv;
  }
  return make_result(x.shape(), std::move(out), "softmax", {x},
                     [d, rows](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       double* g = grad_buffer(ins[0]);
                       if (!g) return;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = o.data.data() + r * d;
                         const double* gy = o.grad.data() + r * d;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < d; ++j) dot += gy[j] * y[j];
                         for (std::size_t j = 0; j < d; ++j) g[r * d + j] += y[j] * (gy[j] - dot);
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank(gain, 1, "layer_norm");
  require_rank(bias, 1, "layer_norm");
  const std::size_t d = last_dim(x);
  if (gain.dim(0) != d || bias.dim(0) != d) {
    throw ShapeError("layer_norm: feature dim " + std::to_string(d) + " vs gain " +
                     shape_str(gain.shape()) + ", bias " + shape_str(bias.shape()));
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  std::vector<double> out(xd.size());
  // Saved for backward: normalised values and per-row inverse std.
  std::vector<double> xhat(xd.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (in[j] - mean) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = gd[j] * h + bd[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), "layer_norm", {x, gain, bias},
      [d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          const TensorImpl& o, const std::vector<Tensor>& ins) {
        const auto gd = ins[1].data();
        double* gx = grad_buffer(ins[0]);
        double* gg = grad_buffer(ins[1]);
        double* gb = grad_buffer(ins[2]);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gy = o.grad.data() + r * d;
          const double* h = xhat.data() + r * d;
          if (gg || gb) {
            for (std::size_t j = 0; j < d; ++j) {
              if (gg) gg[j] += gy[j] * h[j];
              if (gb) gb[j] += gy[j];
            }
          }
          if (gx) {
            double sum_gh = 0.0, sum_ghh = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double gh = gy[j] * gd[j];
              sum_gh += gh;
              sum_ghh += gh * h[j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              const double gh = gy[j] * gd[j];
              gx[r * d + j] += inv_std[r] * (gh - inv_d * sum_gh - h[j] * inv_d * sum_ghh);
            }
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, "gelu",
      [](double v) {
        const double u = kSqrt2OverPi * (v + kGeluCubic * v * v * v);
        return 0.5 * v * (1.0 + std::tanh(u));
      },
      [](double v, double) {
        const double u = kSqrt2OverPi * (v + kGeluCubic * v * v * v);
        const double t = std::tanh(u);
        const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, "silu", [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, "softplus",
      // log(1 + e^v) without overflow for large v.
      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input");
  }
  return unary(
      x, "log", [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result({1}, {acc}, "sum", {x},
                     [](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       double* g = grad_buffer(ins[0]);
                       if (!g) return;
                       const double go = o.grad[0];
                       for (std::size_t i = 0; i < ins[0].numel(); ++i) g[i] += go;
                     });
}

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  const auto xd = x.data();
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += xd[i * d + j];
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= inv;
  return make_result({d}, std::move(out), "mean_rows", {x},
                     [n, d, inv](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       double* g = grad_buffer(ins[0]);
                       if (!g) return;
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < d; ++j) g[i * d + j] += o.grad[j] * inv;
                     });
}

Tensor mean_of(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("mean_of: no inputs");
  for (const Tensor& x : xs) require_same_shape(xs.front(), x, "mean_of");
  const std::size_t n = xs.front().numel();
  const double inv = 1.0 / static_cast<double>(xs.size());
  std::vector<double> out(n, 0.0);
  for (const Tensor& x : xs) {
    const auto xd = x.data();
    for (std::size_t i = 0; i < n; ++i) out[i] += xd[i];
  }
  for (double& v : out) v *= inv;
  return make_result(xs.front().shape(), std::move(out), "mean_of", xs,
                     [inv](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       for (const Tensor& in : ins) {
                         if (double* g = grad_buffer(in)) {
                           for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * inv;
                         }
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), "reshape", {x},
                     [](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       double* g = grad_buffer(ins[0]);
                       if (!g) return;
                       for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
                     });
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t rows = xs.front().dim(0);
  std::size_t cols = 0;
  for (const Tensor& x : xs) {
    require_rank(x, 2, "concat_cols");
    if (x.dim(0) != rows) {
      throw ShapeError("concat_cols: row counts differ: " + shape_str(xs.front().shape()) +
                       " vs " + shape_str(x.shape()));
    }
    cols += x.dim(1);
  }
  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (const Tensor& x : xs) {
    const std::size_t c = x.dim(1);
    const auto xd = x.data();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(xd.data() + i * c, c, out.data() + i * cols + offset);
    offset += c;
  }
  return make_result({rows, cols}, std::move(out), "concat_cols", xs,
                     [rows, cols](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       std::size_t offset = 0;
                       for (const Tensor& in : ins) {
                         const std::size_t c = in.dim(1);
                         if (double* g = grad_buffer(in)) {
                           for (std::size_t i = 0; i < rows; ++i)
                             for (std::size_t j = 0; j < c; ++j)
                               g[i * c + j] += o.grad[i * cols + offset + j];
                         }
                         offset += c;
                       }
                     });
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("concat_rows: no inputs");
  Shape shape = xs.front().shape();
  const Shape tail(shape.begin() + 1, shape.end());
  std::size_t rows = 0;
  std::vector<double> out;
  for (const Tensor& x : xs) {
    if (Shape(x.shape().begin() + 1, x.shape().end()) != tail) {
      throw ShapeError("concat_rows: trailing dims differ: " + shape_str(xs.front().shape()) +
                       " vs " + shape_str(x.shape()));
    }
    rows += x.dim(0);
    out.insert(out.end(), x.data().begin(), x.data().end());
  }
  shape[0] = rows;
  return make_result(std::move(shape), std::move(out), "concat_rows", xs,
                     [](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       std::size_t offset = 0;
                       for (const Tensor& in : ins) {
                         if (double* g = grad_buffer(in)) {
                           for (std::size_t i = 0; i < in.numel(); ++i) g[i] += o.grad[offset + i];
                         }
                         offset += in.numel();
                       }
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len) {
  require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (len == 0 || start + len > cols) {
    throw RangeError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") outside " + shape_str(x.shape()));
  }
  const auto xd = x.data();
  std::vector<double> out(rows * len);
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(xd.data() + i * cols + start, len, out.data() + i * len);
  return make_result({rows, len}, std::move(out), "slice_cols", {x},
                     [rows, cols, start, len](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       double* g = grad_buffer(ins[0]);
                       if (!g) return;
                       for (std::size_t i = 0; i < rows; ++i)
                         for (std::size_t j = 0; j < len; ++j)
                           g[i * cols + start + j] += o.grad[i * len + j];
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t len) {
  const std::size_t rows = x.dim(0);
  if (len == 0 || start + len > rows) {
    throw RangeError("slice_rows: [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") outside " + shape_str(x.shape()));
  }
  const std::size_t stride = x.numel() / rows;
  Shape shape = x.shape();
  shape[0] = len;
  std::vector<double> out(x.data().begin() + start * stride,
                          x.data().begin() + (start + len) * stride);
  return make_result(std::move(shape), std::move(out), "slice_rows", {x},
                     [start, stride](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       double* g = grad_buffer(ins[0]);
                       if (!g) return;
                       for (std::size_t i = 0; i < o.grad.size(); ++i) g[start * stride + i] += o.grad[i];
                     });
}

Tensor reverse_rows(const Tensor& x) {
  const std::size_t rows = x.dim(0);
  const std::size_t stride = x.numel() / rows;
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(xd.data() + (rows - 1 - i) * stride, stride, out.data() + i * stride);
  return make_result(x.shape(), std::move(out), "reverse_rows", {x},
                     [rows, stride](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       double* g = grad_buffer(ins[0]);
                       if (!g) return;
                       for (std::size_t i = 0; i < rows; ++i)
                         for (std::size_t j = 0; j < stride; ++j)
                           g[(rows - 1 - i) * stride + j] += o.grad[i * stride + j];
                     });
}

Tensor causal_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "causal_conv1d");
  require_rank(weight, 2, "causal_conv1d");
  require_rank(bias, 1, "causal_conv1d");
  const std::size_t len = x.dim(0), ch = x.dim(1), k = weight.dim(1);
  if (weight.dim(0) != ch || bias.dim(0) != ch) {
    throw ShapeError("causal_conv1d: input " + shape_str(x.shape()) + ", weight " +
                     shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const double* X = x.data().data();
  const double* W = weight.data().data();
  const double* B = bias.data().data();
  std::vector<double> out(len * ch);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t c = 0; c < ch; ++c) {
      double acc = B[c];
      for (std::size_t j = 0; j < k; ++j) {
        // source row t - (k - 1) + j, skipped when before the sequence start
        if (t + j + 1 < k) continue;
        acc += W[c * k + j] * X[(t + j + 1 - k) * ch + c];
      }
      out[t * ch + c] = acc;
    }
  }
  return make_result(
      {len, ch}, std::move(out), "causal_conv1d", {x, weight, bias},
      [len, ch, k](const TensorImpl& o, const std::vector<Tensor>& ins) {
        const double* X = ins[0].data().data();
        const double* W = ins[1].data().data();
        double* gx = grad_buffer(ins[0]);
        double* gw = grad_buffer(ins[1]);
        double* gb = grad_buffer(ins[2]);
        for (std::size_t t = 0; t < len; ++t) {
          for (std::size_t c = 0; c < ch; ++c) {
            const double g = o.grad[t * ch + c];
            if (gb) gb[c] += g;
            for (std::size_t j = 0; j < k; ++j) {
              if (t + j + 1 < k) continue;
              const std::size_t src = (t + j + 1 - k) * ch + c;
              if (gx) gx[src] += g * W[c * k + j];
              if (gw) gw[c * k + j] += g * X[src];
            }
          }
        }
      });
}

Tensor cross_entropy(const Tensor& labels, const Tensor& probs) {
  require_rank(labels, 2, "cross_entropy");
  require_same_shape(labels, probs, "cross_entropy");
  const std::size_t batch = labels.dim(0), classes = labels.dim(1);
  const auto y = labels.data();
  const auto p = probs.data();
  for (std::size_t i = 0; i < batch; ++i) {
    int ones = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double v = y[i * classes + c];
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) {
      throw ContractError("cross_entropy: label row " + std::to_string(i) + " is not one-hot");
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0) total -= y[i] * std::log(std::max(p[i], kProbClamp));
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  return make_result({1}, {total * inv_b}, "cross_entropy", {labels, probs},
                     [inv_b](const TensorImpl& o, const std::vector<Tensor>& ins) {
                       double* g = grad_buffer(ins[1]);
                       if (!g) return;
                       const auto y = ins[0].data();
                       const auto p = ins[1].data();
                       for (std::size_t i = 0; i < y.size(); ++i) {
                         // clamp is flat below the threshold
                         if (y[i] != 0.0 && p[i] > kProbClamp) g[i] -= o.grad[0] * inv_b * y[i] / p[i];
                       }
                     });
}

}  // namespace dear
