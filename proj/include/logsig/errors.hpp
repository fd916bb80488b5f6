#pragma once

#include <stdexcept>
#include <string>

namespace logsig {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree (width, depth, row/column counts).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A tensor handed to the Lyndon projection is not a Lie element.
class NotLieError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or produced non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Missing or malformed input files.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid model or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace logsig
