#include "signspot/params.hpp"

#include <cmath>

namespace signspot {

template <typename T>
Tensor<T>& ParamStore<T>::insert(const std::string& name, Tensor<T> tensor, bool trainable) {
  check_contract(!index_.contains(name), "ParamStore: duplicate name '" + name + "'");
  tensor.set_requires_grad(trainable);
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{name, std::move(tensor), trainable});
  return entries_.back().tensor;
}

template <typename T>
Tensor<T>& ParamStore<T>::add_param(const std::string& name, Tensor<T> tensor) {
  return insert(name, std::move(tensor), true);
}

template <typename T>
Tensor<T>& ParamStore<T>::add_buffer(const std::string& name, Tensor<T> tensor) {
  return insert(name, std::move(tensor), false);
}

template <typename T>
std::vector<Tensor<T>> ParamStore<T>::trainable_params() const {
  std::vector<Tensor<T>> out;
  for (const auto& e : entries_) {
    if (e.trainable) out.push_back(e.tensor);
  }
  return out;
}

template <typename T>
Tensor<T>* ParamStore<T>::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second].tensor;
}

template <typename T>
const Tensor<T>* ParamStore<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second].tensor;
}

template <typename T>
int64_t ParamStore<T>::total_parameters() const {
  int64_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.tensor.numel();
  }
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename T>
Tensor<T> uniform_fan_in(Shape shape, int64_t fan_in, std::mt19937_64& rng) {
  check_contract(fan_in > 0, "uniform_fan_in: fan_in must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> values(static_cast<size_t>(shape.numel()));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(values));
}

template class ParamStore<float>;
template class ParamStore<double>;
template Tensor<float> uniform_fan_in<float>(Shape, int64_t, std::mt19937_64&);
template Tensor<double> uniform_fan_in<double>(Shape, int64_t, std::mt19937_64&);

}  // namespace signspot
