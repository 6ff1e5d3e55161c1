#pragma once

#include <stdexcept>
#include <string>

namespace conflux {

// Exception hierarchy. Each family maps onto one CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 2; }
};

// Bad flags, bad config, unknown subcommand.
class UsageError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 1; }
};

// Malformed or inconsistent input data, missing upstream artifacts.
class DataError : public Error {
 public:
  using Error::Error;
};

// A metric that is undefined on its input (no positives, single class).
class UndefinedMetricError : public DataError {
 public:
  using DataError::DataError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

// Cholesky failed even after jitter escalation.
class SingularModelError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NonConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace conflux
