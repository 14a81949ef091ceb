#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dear {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
struct TensorImpl;

// Backward rule of a single recorded op. Reads the output gradient from
// `out.grad` and accumulates into the gradients of `inputs` that track one.
using BackwardFn =
    std::function<void(const TensorImpl& out, const std::vector<Tensor>& inputs)>;

struct Node {
  std::string op;
  std::vector<Tensor> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Empty means "no gradient". Allocated lazily by the first backward pass
  // that reaches this tensor.
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
};

// Dense row-major float64 tensor with reference semantics: copies share the
// same storage, like a handle. Use clone() for a deep copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_rows(const std::vector<std::vector<double>>& rows,
                          bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Mutable access is for initialisation, optimizers and finite differences;
  // never mutate a tensor that is part of a live graph.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double at(std::size_t i) const { return impl_->data.at(i); }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }
  // True when gradients flow into this tensor: a trainable leaf or the
  // output of a recorded op.
  bool tracks_grad() const { return impl_->requires_grad || impl_->grad_fn; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }
  bool is_leaf() const { return impl_->grad_fn == nullptr; }
  const std::shared_ptr<Node>& grad_fn() const { return impl_->grad_fn; }

  Tensor clone() const;
  // Same values, no history, requires_grad=false.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_result(Shape, std::vector<double>, const char*,
                            std::vector<Tensor>, BackwardFn);
  std::shared_ptr<TensorImpl> impl_;
};

// Creates an op output. Records a node only when gradient mode is enabled
// and at least one input tracks gradients.
Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                   std::vector<Tensor> inputs, BackwardFn backward);

// Gradient buffer of `t`, allocated on first use, or nullptr when `t` does
// not track gradients.
double* grad_buffer(const Tensor& t);

bool grad_mode_enabled();

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Topologically ordered list of the op nodes that produced a tensor.
struct RecordEntry {
  std::shared_ptr<TensorImpl> output;
  std::shared_ptr<Node> node;
};

class ComputationRecord {
 public:
  static ComputationRecord of(const Tensor& root);
  const std::vector<RecordEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<RecordEntry> entries_;
};

// Reverse-mode pass from a scalar loss. Gradients accumulate into every
// tracking tensor reachable from `loss`; tensors with requires_grad=false
// and no history are never written.
void backward(const Tensor& loss);
void backward(const Tensor& loss, const ComputationRecord& record);

// FNV-1a over the raw bytes of shape and data; used for freeze checks.
std::uint64_t content_hash(const Tensor& t);

}  // namespace dear
