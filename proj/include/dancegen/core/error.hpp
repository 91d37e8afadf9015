#pragma once

#include <stdexcept>
#include <string>

namespace dancegen {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input fails a documented precondition or invariant.
struct ValidationError : Error {
  using Error::Error;
};

// Array dimensions disagree with the expected layout.
struct ShapeError : ValidationError {
  using ValidationError::ValidationError;
};

// A 6D rotation entry cannot be orthonormalized (zero or parallel vectors).
struct DegenerateRotationError : ValidationError {
  using ValidationError::ValidationError;
};

// Malformed file contents; message names the offending field.
struct ParseError : Error {
  using Error::Error;
};

// Filesystem-level failure (missing path, unwritable directory).
struct IoError : Error {
  using Error::Error;
};

// Unknown style / genre label without a fallback embedding file.
struct UnknownStyleError : ValidationError {
  using ValidationError::ValidationError;
};

// A loss or activation became non-finite; message names the first offender.
struct NonFiniteError : Error {
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

inline void require_shape(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace dancegen
