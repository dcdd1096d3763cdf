#pragma once

#include <stdexcept>
#include <string>

namespace webguard {

// Base for every error raised by the library. Subclasses mirror the error
// categories that callers (and the CLI exit codes) distinguish.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Out-of-range numeric argument (dilation < 1, pool larger than input, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Malformed user data: empty strings, bad manifest rows, missing files.
class InputError : public Error {
 public:
  using Error::Error;
};

// Inconsistent configuration or checkpoint/config mismatch.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An operation was invoked outside its precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// A forward op produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace webguard
