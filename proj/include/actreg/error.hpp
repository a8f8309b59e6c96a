#pragma once

#include <stdexcept>
#include <string>

namespace actreg {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A precondition on argument values was violated.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed run configuration (missing keys, bad values, inconsistent settings).
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A NaN or infinity appeared where only finite values are allowed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A file or stream did not match its documented format.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace actreg
