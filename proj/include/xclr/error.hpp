#pragma once

#include <stdexcept>
#include <string>

namespace xclr {

// Raised when a caller violates a documented precondition (shapes, ranges).
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

// Raised when a computation produces NaN/Inf or otherwise cannot proceed numerically.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace xclr
