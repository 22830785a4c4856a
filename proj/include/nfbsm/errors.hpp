#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nfbsm {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: configuration values, argument contracts, malformed files.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Dimension or argument contract violated by the caller.
class ContractError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Failures of the numerics themselves.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DomainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class UnsupportedOrderError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class RankError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// HRTF table parse failure. line() is 1-based, 0 when not tied to a line.
class FormatError : public ValidationError {
 public:
  FormatError(const std::string& what, std::size_t line)
      : ValidationError(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DataError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace nfbsm
