#pragma once

#include <stdexcept>
#include <string>

namespace msvar {

// Base for every error raised by the library. The CLI maps the concrete
// type onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-domain input: bad coordinates, missing columns,
// non-monotonic time, too little data.
class InputError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values (ranges, strides, hyperparameters).
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

// Time index outside the range a model can evaluate.
class IndexError : public InputError {
 public:
  using InputError::InputError;
};

// Underflow, non-PD covariance, non-finite draws.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace msvar
