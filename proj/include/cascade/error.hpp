#pragma once

#include <stdexcept>
#include <string>

namespace cascade {

/// Base of all library errors. Subclasses map onto CLI exit codes:
/// config/data/shape problems exit 2, numeric failures exit 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible shapes passed to a kernel or layer.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A precondition on an argument value was violated.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A tape/gradient pair does not belong together.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Bad bytes in a serialized file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Dataset-level inconsistency (stream lengths, labels, dims).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid model or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite arithmetic is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace cascade
