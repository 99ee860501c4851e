#pragma once

#include <stdexcept>
#include <string>

namespace partwise {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values or combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Not enough data to draw the requested episode.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// File system or serialization failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace partwise
