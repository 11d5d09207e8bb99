#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace calibr8 {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument to an operation (empty design, n not a perfect power, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Point outside the parameter box.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed operator/model/config. `path` names the offending field when known.
class ConfigurationError : public Error {
 public:
  explicit ConfigurationError(const std::string& msg, std::string path = {})
      : Error(path.empty() ? msg : path + ": " + msg), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Cholesky failure that survived jitter escalation.
class ConditioningError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Simulator failed or returned non-finite output. Carries the input.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& msg, std::vector<double> x, long index = -1)
      : Error(msg), x_(std::move(x)), index_(index) {}
  const std::vector<double>& x() const noexcept { return x_; }
  long index() const noexcept { return index_; }

 private:
  std::vector<double> x_;
  long index_;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class EmptyResultError : public CalibrationError {
 public:
  using CalibrationError::CalibrationError;
};

class DegeneracyError : public CalibrationError {
 public:
  using CalibrationError::CalibrationError;
};

/// Simulator-evaluation budget exhausted.
class BudgetExhausted : public Error {
 public:
  using Error::Error;
};

}  // namespace calibr8
