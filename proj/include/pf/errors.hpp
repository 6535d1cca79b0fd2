#pragma once

#include <limits>
#include <stdexcept>
#include <string>

namespace pf {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: wrong shapes, invalid parameters, unphysical states.
/// The CLI maps these to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class PhysicalityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnsupportedConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Failure during integration. Carries the simulation time when known
/// (NaN otherwise). The CLI maps these to exit code 3.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what,
                          double time = std::numeric_limits<double>::quiet_NaN())
      : Error(what), time_(time) {}

  double time() const { return time_; }

 private:
  double time_;
};

class TruncationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InstabilityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class CorruptedStateError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class StepSizeError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ImpossibleJumpError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// File system failures; exit code 4.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pf
