// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy shared by all hfo modules.

#pragma once

#include <stdexcept>
#include <string>

namespace hfo {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand lengths or shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Wrong number of operands (e.g. reducing an empty list).
class ArityError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced or supplied where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A search direction that is zero or not a descent direction.
class DirectionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (batch sizes, worker counts, fractions...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (bad magic, inconsistent counts).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Two inputs that must agree do not (e.g. image vs label counts).
class ConsistencyError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hfo
