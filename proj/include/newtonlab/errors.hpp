#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace newtonlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A derivative entry came out as inf or nan.
class NonFiniteDerivative : public Error {
 public:
  explicit NonFiniteDerivative(std::size_t parameter)
      : Error("non-finite derivative with respect to parameter " + std::to_string(parameter)),
        parameter_(parameter) {}

  std::size_t parameter() const noexcept { return parameter_; }

 private:
  std::size_t parameter_;
};

class UnsupportedDimension : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class SingularSystem : public Error {
 public:
  using Error::Error;
};

class EigFailure : public Error {
 public:
  using Error::Error;
};

class StepFailure : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace newtonlab
