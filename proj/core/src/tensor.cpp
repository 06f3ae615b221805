#include "signspot/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace signspot {

namespace {
thread_local bool t_grad_enabled = true;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <typename T>
void check_finite(std::span<const T> values, const char* context) {
  for (const T v : values) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError(std::string(context) + ": non-finite value encountered");
    }
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<Node>()) {
  node_->value.assign(static_cast<size_t>(shape.numel()), fill);
  node_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node>()) {
  check_contract(static_cast<int64_t>(values.size()) == shape.numel(),
                 "Tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape.str());
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  check_contract(defined(), "use of undefined Tensor");
  return node_->shape;
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  check_contract(defined(), "use of undefined Tensor");
  return std::span<const T>(node_->value);
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  check_contract(defined(), "use of undefined Tensor");
  return std::span<T>(node_->value);
}

template <typename T>
T Tensor<T>::item() const {
  check_contract(numel() == 1, "item() requires a single-element tensor, got " + shape().str());
  return node_->value[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return defined() && node_->requires_grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool v) {
  check_contract(defined(), "use of undefined Tensor");
  check_contract(!v || node_->backward_fn == nullptr || node_->requires_grad,
                 "cannot re-enable gradients on an op output");
  node_->requires_grad = v;
  return *this;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  check_contract(defined(), "use of undefined Tensor");
  return std::span<const T>(node_->grad);
}

template <typename T>
void Tensor<T>::zero_grad() {
  check_contract(defined(), "use of undefined Tensor");
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detached() const {
  check_contract(defined(), "use of undefined Tensor");
  return Tensor(node_->shape, node_->value);
}

template <typename T>
Tensor<T> Tensor<T>::make_op_result(Shape shape, std::vector<T> value,
                                    std::vector<Tensor> inputs,
                                    std::function<void(Node&)> backward,
                                    const char* op_name) {
  check_finite(std::span<const T>(value), op_name);
  Tensor out(std::move(shape), std::move(value));
  bool track = grad_enabled();
  if (track) {
    track = std::any_of(inputs.begin(), inputs.end(),
                        [](const Tensor& t) { return t.requires_grad(); });
  }
  if (track) {
    out.node_->requires_grad = true;
    out.node_->backward_fn = std::move(backward);
    out.node_->inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) out.node_->inputs.push_back(t.node_);
  }
  return out;
}

template <typename T>
void Tensor<T>::backward() const {
  check_contract(defined(), "use of undefined Tensor");
  check_contract(numel() == 1, "backward() requires a scalar output");
  check_contract(node_->requires_grad, "backward() on a tensor that does not require gradients");

  // Iterative post-order DFS gives a topological order of the graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  for (Node* n : order) {
    if (!n->grad.empty()) check_finite(std::span<const T>(n->grad), "backward");
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void check_finite<float>(std::span<const float>, const char*);
template void check_finite<double>(std::span<const double>, const char*);

}  // namespace signspot
