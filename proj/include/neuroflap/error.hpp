#pragma once

#include <stdexcept>
#include <string>

namespace neuroflap {

/// Raised when a caller breaks an operation's documented precondition
/// (shape mismatch, non-binary spike input, NaN where a finite value is required).
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace neuroflap
