#pragma once

#include <stdexcept>
#include <string>

namespace qsonn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (WAV, checkpoint, feature cache) or spec mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
};

class RateError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class MissingListError : public IoError {
 public:
  using IoError::IoError;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace qsonn
