#pragma once

#include <stdexcept>
#include <string>

namespace riskcap {

// Parameter invariant violations are reported as std::invalid_argument.
// The classes below cover failures that depend on data or numerics.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The data cannot support the requested fit (too few points, zero variance).
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// An iterative or rejection procedure did not reach its goal.
class ComputationError : public Error {
 public:
  using Error::Error;
};

/// Malformed input files or configuration documents.
class ValidationError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const char* message) {
  if (!condition) throw std::invalid_argument(message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

}  // namespace detail
}  // namespace riskcap
