#pragma once

#include <stdexcept>
#include <string>

namespace mrnr {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition on an argument violated by the caller.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Singular systems, solver failures, degenerate training data.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A category, region or key that should exist does not.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Invalid or unknown configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Data that parses but cannot drive the pipeline (no stimuli, one class, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace mrnr
