#pragma once

#include <stdexcept>
#include <string>

namespace signspot {

// Shape, channel-arithmetic or other contract violations caught at call time.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input files, bad annotation rows, unknown config keys.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf surfaced by a forward or backward pass, or training divergence.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check_contract(bool ok, const std::string& msg) {
  if (!ok) throw ContractError(msg);
}

}  // namespace signspot
