#pragma once

#include <stdexcept>
#include <string>

namespace diva {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data violates a documented precondition (bad record, bad shape, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure (non-finite values, degenerate statistics).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace diva
