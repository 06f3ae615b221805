#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "signspot/error.hpp"
#include "signspot/shape.hpp"

namespace signspot {

// Thread-local gradient-recording switch. Ops record a backward function
// only while recording is on and at least one input requires gradients.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> inputs;
  std::function<void(TensorNode&)> backward_fn;

  std::span<T> ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return std::span<T>(grad);
  }
};

}  // namespace detail

// Dense N-d array of reals in row-major order with optional reverse-mode
// gradient tracking. A Tensor is a cheap handle to a shared node; ops
// always allocate fresh storage for their outputs (no view aliasing).
template <typename T>
class Tensor {
 public:
  using Node = detail::TensorNode<T>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const { return shape().numel(); }
  int64_t dim(int axis) const { return shape()[axis]; }
  int ndim() const { return shape().ndim(); }

  std::span<const T> data() const;
  // Direct write access to the values. Meant for leaves (parameters,
  // input assembly, optimizer updates); mutating an op output would not
  // propagate through an already recorded graph.
  std::span<T> mutable_data();

  T item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool v);

  // Gradient accumulated by the last backward(); empty if none.
  std::span<const T> grad() const;
  void zero_grad();

  // Reverse-mode sweep from a scalar output. Accumulates into the grad
  // buffers of every reachable tensor that requires gradients.
  void backward() const;

  // Value copy detached from any graph.
  Tensor detached() const;

  // Builds an op output. `backward` reads node.grad and accumulates into
  // the inputs' grads; it is dropped when recording is off or no input
  // requires gradients.
  static Tensor make_op_result(Shape shape, std::vector<T> value,
                               std::vector<Tensor> inputs,
                               std::function<void(Node&)> backward,
                               const char* op_name);

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Throws NumericError when any entry is NaN or Inf.
template <typename T>
void check_finite(std::span<const T> values, const char* context);

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template void check_finite<float>(std::span<const float>, const char*);
extern template void check_finite<double>(std::span<const double>, const char*);

}  // namespace signspot
