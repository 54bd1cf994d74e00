#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rfadv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, bad arguments, unsupported names.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor or frame dimensions that do not line up.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Malformed, truncated or corrupted file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Arguments outside a function's mathematical domain (e.g. log of a nonpositive power).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf showed up; `layer()` is the index of the first layer that produced it.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::ptrdiff_t layer)
      : Error(what + " (layer " + std::to_string(layer) + ")"), layer_(layer) {}
  std::ptrdiff_t layer() const noexcept { return layer_; }

 private:
  std::ptrdiff_t layer_;
};

class DegenerateAttackError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace rfadv
