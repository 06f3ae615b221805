#pragma once

#include <cstdint>
#include <vector>

#include "signspot/tensor.hpp"

namespace signspot {

// lr0 * 0.5 * (1 + cos(pi * step / total_steps)).
double cosine_lr(int64_t step, int64_t total_steps, double lr0);

// Adam with bias correction. State starts at zero; step() consumes the
// gradients currently on the parameters.
template <typename T>
class Adam {
 public:
  explicit Adam(std::vector<Tensor<T>> params, double lr = 3e-4, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int64_t step_count() const { return step_; }

  void step();
  void zero_grad();

  // Exposed for checkpoint resume; moment vectors are per parameter,
  // in the order the parameters were given.
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void set_step_count(int64_t s) { step_ = s; }
  const std::vector<Tensor<T>>& params() const { return params_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  double lr_, beta1_, beta2_, epsilon_;
  int64_t step_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace signspot
