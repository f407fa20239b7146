#pragma once

#include <stdexcept>
#include <string>

namespace slide {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor rank or extent does not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (even window size, bad head split, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation called on an object in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value produced where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// I/O failure; the message carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace slide
