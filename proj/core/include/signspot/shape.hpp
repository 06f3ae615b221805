#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "signspot/error.hpp"

namespace signspot {

// Extents of a dense row-major tensor. All extents must be positive.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int64_t> dims) : dims_(dims) { validate(); }
  explicit Shape(std::vector<int64_t> dims) : dims_(std::move(dims)) { validate(); }

  int ndim() const { return static_cast<int>(dims_.size()); }
  int64_t operator[](int axis) const { return dims_.at(static_cast<size_t>(axis)); }
  const std::vector<int64_t>& dims() const { return dims_; }

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : dims_) n *= d;
    return n;
  }

  bool operator==(const Shape& other) const = default;

  std::string str() const {
    std::string s = "[";
    for (size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + "]";
  }

 private:
  void validate() const {
    for (int64_t d : dims_) check_contract(d > 0, "Shape extents must be positive, got " + str());
  }
  std::vector<int64_t> dims_;
};

}  // namespace signspot
