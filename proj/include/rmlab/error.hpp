#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rmlab {

// Base of every error the library throws. `kind()` is a stable machine-readable
// tag used by the CLI when it reports failures as JSON.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class InvalidInput : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid_input"; }
};

class FormatError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "format"; }
};

class ConsistencyError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "consistency"; }
};

class Unavailable : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "unavailable"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

// Raised when a loss or gradient stops being finite.
class NumericalFailure : public Error {
 public:
  NumericalFailure(const std::string& what, std::size_t sample)
      : Error(what), sample_(sample) {}
  const char* kind() const noexcept override { return "numerical_failure"; }
  std::size_t sample() const noexcept { return sample_; }

 private:
  std::size_t sample_;
};

}  // namespace rmlab
