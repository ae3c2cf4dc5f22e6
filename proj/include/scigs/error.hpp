#pragma once

#include <stdexcept>
#include <string>

namespace scigs {

/// Thrown when an argument violates a documented precondition
/// (shape mismatch, zero-norm quaternion, non-PD covariance, ...).
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown for unreadable, truncated or corrupt files. The message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidParameter(what);
}

}  // namespace scigs
