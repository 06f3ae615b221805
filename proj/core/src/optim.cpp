#include "signspot/optim.hpp"

#include <cmath>
#include <numbers>

namespace signspot {

double cosine_lr(int64_t step, int64_t total_steps, double lr0) {
  check_contract(total_steps > 0, "cosine_lr: total_steps must be positive");
  check_contract(step >= 0 && step <= total_steps, "cosine_lr: step out of [0, total_steps]");
  const double x = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * x));
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, double lr, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    check_contract(p.requires_grad(), "Adam: all parameters must require gradients");
    m_.emplace_back(static_cast<size_t>(p.numel()), T(0));
    v_.emplace_back(static_cast<size_t>(p.numel()), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto values = params_[i].mutable_data();
    auto grads = params_[i].grad();
    if (grads.empty()) continue;  // parameter unused in this step's graph
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < values.size(); ++j) {
      const double g = static_cast<double>(grads[j]);
      const double mj = beta1_ * static_cast<double>(m[j]) + (1.0 - beta1_) * g;
      const double vj = beta2_ * static_cast<double>(v[j]) + (1.0 - beta2_) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double m_hat = mj / bc1;
      const double v_hat = vj / bc2;
      values[j] = static_cast<T>(static_cast<double>(values[j]) -
                                 lr_ * m_hat / (std::sqrt(v_hat) + epsilon_));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace signspot
