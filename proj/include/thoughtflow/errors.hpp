#pragma once

#include <stdexcept>
#include <string>

namespace thoughtflow {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector/matrix shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration value outside its admissible range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller violated a documented precondition (e.g. non-probability input).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Operations invoked in the wrong order (e.g. correction training before base training).
class LifecycleError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf where a finite value was required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Corrupt, truncated or version-mismatched file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace thoughtflow
