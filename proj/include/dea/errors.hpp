#pragma once

#include <stdexcept>
#include <string>

namespace dea {

/// Bad input: out-of-range parameters, malformed files, violated preconditions.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Base for failures of a numerical procedure on otherwise valid input.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model evaluated outside its mathematical domain (e.g. Gent pole, log of a non-positive number).
class DomainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Operation requested on a model variant that does not provide it.
class UnsupportedModelError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SolverError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Step-size underflow or Newton breakdown; `time()` is where it happened.
class IntegratorError : public NumericalError {
 public:
  IntegratorError(const std::string& what, double t) : NumericalError(what), t_(t) {}
  double time() const noexcept { return t_; }

 private:
  double t_;
};

/// Evaluation exceeded its wall-clock deadline.
class TimeoutError : public IntegratorError {
 public:
  using IntegratorError::IntegratorError;
};

class DivergenceError : public IntegratorError {
 public:
  using IntegratorError::IntegratorError;
};

class FitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class OptimizationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace dea
