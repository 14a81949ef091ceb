#include "dear/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dear/errors.hpp"

namespace dear {
namespace {

double scalar_value(const Tensor& t) {
  if (t.numel() != 1) {
    throw ContractError("gradient check needs a scalar function, got " +
                        shape_str(t.shape()));
  }
  return t.item();
}

}  // namespace

double check_gradient(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                      double h) {
  Tensor leaf(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
  return check_gradients([&] { return f(leaf); }, {leaf}, h).max_rel_error;
}

GradCheckReport check_gradients(const std::function<Tensor()>& loss,
                                std::vector<Tensor> params, double h,
                                const std::vector<std::string>& names) {
  if (!(h > 0.0)) throw ContractError("gradient check: step must be positive");
  for (Tensor& p : params) p.zero_grad();
  {
    Tensor out = loss();
    scalar_value(out);
    backward(out);
  }
  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    const std::vector<double> analytic =
        p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                     : std::vector<double>(p.numel(), 0.0);
    auto data = p.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = scalar_value(loss());
      data[i] = saved - h;
      const double down = scalar_value(loss());
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-12});
      const double err = std::abs(analytic[i] - numeric) / denom;
      ++report.components_checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = pi < names.size() ? names[pi] : "param" + std::to_string(pi);
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace dear
