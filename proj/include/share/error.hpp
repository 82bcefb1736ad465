#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace share {

enum class ErrorCode {
  ParseError,
  SchemaError,
  ConfigError,
  DomainError,
  UnknownEquation,
  UnknownDataset,
  UnknownFunction,
  ValidationFailed,
  DegenerateTarget,
  TrainingDiverged,
  NonFiniteOutput,
  NonFiniteGradient,
  PatternMismatch,
  UnknownShape,
  NoSegments,
  IoError,
  InvalidArgument,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Line is 1-based; 0 means the error is not tied to a line (single-expression input).
// Column is a 1-based character position within the line or expression.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line, std::size_t column);

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace share
