#pragma once

#include <stdexcept>
#include <string>

namespace evd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix inversion requested below the singularity threshold.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// An iterative solve stopped without meeting its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// A time step could not be completed; the caller may retry with a smaller step.
class StepFailure : public Error {
 public:
  StepFailure(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// A hard state invariant (density or det Fe positivity) was violated.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or violated precondition on inputs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class BoundViolation : public Error {
 public:
  using Error::Error;
};

class InvalidCertificate : public Error {
 public:
  using Error::Error;
};

}  // namespace evd
