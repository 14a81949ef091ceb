#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dear/tensor.hpp"

namespace dear {

// Max over components of |analytic - central difference| /
// max(|analytic|, |difference|, 1e-12), for scalar-valued f at x.
double check_gradient(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                      double h);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t components_checked = 0;
};

// Same measure over every component of every tensor in `params`. `loss`
// rebuilds the graph from the current parameter values on each call.
// `names` is optional and only used for reporting.
GradCheckReport check_gradients(const std::function<Tensor()>& loss,
                                std::vector<Tensor> params, double h,
                                const std::vector<std::string>& names = {});

}  // namespace dear
