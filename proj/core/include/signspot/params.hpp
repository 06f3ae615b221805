#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "signspot/tensor.hpp"

namespace signspot {

// Named registry of trainable parameters and non-trainable buffers
// (batch-norm running statistics). Insertion order is the checkpoint
// and optimizer order; names must be unique.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
    bool trainable;
  };

  Tensor<T>& add_param(const std::string& name, Tensor<T> tensor);
  Tensor<T>& add_buffer(const std::string& name, Tensor<T> tensor);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::vector<Tensor<T>> trainable_params() const;
  Tensor<T>* find(const std::string& name);
  const Tensor<T>* find(const std::string& name) const;

  int64_t total_parameters() const;
  void zero_grad();

 private:
  Tensor<T>& insert(const std::string& name, Tensor<T> tensor, bool trainable);
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Fan-in scaled uniform initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
Tensor<T> uniform_fan_in(Shape shape, int64_t fan_in, std::mt19937_64& rng);

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template Tensor<float> uniform_fan_in<float>(Shape, int64_t, std::mt19937_64&);
extern template Tensor<double> uniform_fan_in<double>(Shape, int64_t, std::mt19937_64&);

}  // namespace signspot
