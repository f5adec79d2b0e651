#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vqr {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the primitive or the model configuration.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a documented precondition (non-scalar backward root, empty batch, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint is truncated, has the wrong version, or fails its checksum.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Metric has no defined value for the input (no comparable pairs, single class, ...).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace vqr
