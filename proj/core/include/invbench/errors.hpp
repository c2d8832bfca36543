#pragma once

#include <stdexcept>
#include <string>

namespace invbench {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible for an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A design vector lies outside its task's bounds, or an argument is outside
// the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf during training, a non-convergent series, a zero denominator.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed checkpoint, dataset or report file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A file or artifact the operation depends on does not exist.
class MissingArtifact : public Error {
 public:
  using Error::Error;
};

}  // namespace invbench
