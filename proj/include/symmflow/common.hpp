#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace symmflow {

/// Error raised when inputs violate an operation's contract (bad shapes,
/// unknown names, malformed files). CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Error raised when a computation fails at runtime (blow-up, NaN,
/// degenerate stencils). CLI maps these to exit code 2.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

inline void require_numeric(bool cond, const std::string& msg) {
  if (!cond) throw NumericError(msg);
}

}  // namespace symmflow
