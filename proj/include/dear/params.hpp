#pragma once

#include <string>
#include <vector>

#include "dear/rng.hpp"
#include "dear/tensor.hpp"

namespace dear {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedTensor>;

// Gaussian init with the given std; the tensor's requires_grad is `trainable`.
Tensor init_normal(Shape shape, double stddev, Rng& rng, bool trainable);
// N(0, 1/fan_in) for a [fan_in x fan_out] projection.
Tensor init_linear(std::size_t fan_in, std::size_t fan_out, Rng& rng, bool trainable);
Tensor init_constant(Shape shape, double value, bool trainable);

std::size_t count_elements(const ParamList& params);

}  // namespace dear
