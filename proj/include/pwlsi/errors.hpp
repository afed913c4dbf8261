#pragma once

#include <stdexcept>
#include <string>

namespace pwlsi {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Cholesky factorization failed (matrix not positive definite).
class FactorizationError : public Error {
 public:
  using Error::Error;
};

/// Shape mismatch or malformed computation graph.
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Auto-conditioning produced an empty interval where one cannot occur.
class InconsistencyError : public Error {
 public:
  using Error::Error;
};

/// The detected region is empty or covers every pixel; no test exists.
class UndefinedHypothesis : public Error {
 public:
  UndefinedHypothesis() : Error("no testable region") {}
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class SweepBudgetError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class TrainingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class CalibrationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Malformed or truncated input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace pwlsi
