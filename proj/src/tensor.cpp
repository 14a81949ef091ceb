#include "dear/tensor.hpp"

#include <cstring>
#include <sstream>
#include <unordered_set>

#include "dear/errors.hpp"

namespace dear {
namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("zero-sized dimension in " + shape_str(shape));
  }
  if (dear::numel(shape) != data.size()) {
    throw ShapeError("shape " + shape_str(shape) + " holds " +
                     std::to_string(dear::numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = dear::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows,
                         bool requires_grad) {
  if (rows.empty()) throw ShapeError("from_rows: no rows");
  const std::size_t cols = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data), requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (rank() != 2) throw ShapeError("at(r, c) needs a 2-D tensor");
  return impl_->data.at(r * impl_->shape[1] + c);
}

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->data, impl_->requires_grad);
  t.impl_->grad = impl_->grad;
  return t;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                   std::vector<Tensor> inputs, BackwardFn backward) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  if (g_grad_enabled) {
    bool tracked = false;
    for (const Tensor& in : inputs) tracked = tracked || in.tracks_grad();
    if (tracked) {
      auto node = std::make_shared<Node>();
      node->op = op;
      node->inputs = std::move(inputs);
      node->backward = std::move(backward);
      impl->grad_fn = std::move(node);
      impl->requires_grad = true;
    }
  }
  return Tensor(std::move(impl));
}

double* grad_buffer(const Tensor& t) {
  TensorImpl* impl = t.impl();
  if (!impl->requires_grad && !impl->grad_fn) return nullptr;
  if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0);
  return impl->grad.data();
}

bool grad_mode_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

ComputationRecord ComputationRecord::of(const Tensor& root) {
  ComputationRecord record;
  std::unordered_set<const TensorImpl*> visited;
  // Iterative post-order DFS; recursion would overflow on long scans.
  struct Frame {
    std::shared_ptr<TensorImpl> impl;
    std::size_t next_input;
  };
  std::vector<Frame> stack;
  if (root.grad_fn()) {
    stack.push_back({root.impl_ptr(), 0});
    visited.insert(root.impl());
  }
  while (!stack.empty()) {
    Frame& top = stack.back();
    const auto& inputs = top.impl->grad_fn->inputs;
    if (top.next_input < inputs.size()) {
      const Tensor& in = inputs[top.next_input++];
      if (in.grad_fn() && visited.insert(in.impl()).second) {
        stack.push_back({in.impl_ptr(), 0});
      }
      continue;
    }
    record.entries_.push_back({top.impl, top.impl->grad_fn});
    stack.pop_back();
  }
  return record;
}

void backward(const Tensor& loss) { backward(loss, ComputationRecord::of(loss)); }

void backward(const Tensor& loss, const ComputationRecord& record) {
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got " +
                        shape_str(loss.shape()));
  }
  if (!loss.tracks_grad()) {
    throw ContractError("backward: loss does not depend on any trainable tensor");
  }
  if (!record.entries().empty() &&
      record.entries().back().output.get() != loss.impl()) {
    throw ContractError("backward: loss is not the terminal node of the record");
  }
  double* g = grad_buffer(loss);
  g[0] += 1.0;
  const auto& entries = record.entries();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    const TensorImpl& out = *it->output;
    if (out.grad.empty()) continue;
    it->node->backward(out, it->node->inputs);
  }
}

std::uint64_t content_hash(const Tensor& t) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (std::size_t d : t.shape()) {
    const std::uint64_t v = d;
    mix(&v, sizeof v);
  }
  mix(t.data().data(), t.numel() * sizeof(double));
  return h;
}

}  // namespace dear
