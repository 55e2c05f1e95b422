#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mlec {

/// Process exit codes used by the CLI. Library errors carry one of these so
/// callers can map a failure to the right exit status.
enum class ErrorCode : int {
  config = 2,
  data = 3,
  runtime = 4,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::config: return "E_CONFIG";
    case ErrorCode::data: return "E_DATA";
    case ErrorCode::runtime: return "E_RUNTIME";
  }
  return "E_RUNTIME";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Bad run configuration: unknown keys, out-of-range values, missing paths.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::string message)
      : Error(ErrorCode::config, std::move(message)) {}
};

/// Malformed input row. Carries the 1-based line number of the offending row.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::string message)
      : Error(ErrorCode::data,
              "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that violates a domain invariant (e.g. label not 0/1).
class ValidationError : public Error {
 public:
  explicit ValidationError(std::string message)
      : Error(ErrorCode::data, std::move(message)), line_(0) {}

  ValidationError(std::size_t line, std::string message)
      : Error(ErrorCode::data,
              "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Operation requested on a component that cannot perform it
/// (e.g. fine-tuning a frozen embedding backend).
class CapabilityError : public Error {
 public:
  explicit CapabilityError(std::string message)
      : Error(ErrorCode::runtime, std::move(message)) {}
};

/// Tensor/matrix dimension mismatch between producer and consumer.
class ShapeError : public Error {
 public:
  explicit ShapeError(std::string message)
      : Error(ErrorCode::runtime, std::move(message)) {}
};

/// Generic runtime failure (corrupt file, non-finite loss, IO).
class RuntimeError : public Error {
 public:
  explicit RuntimeError(std::string message)
      : Error(ErrorCode::runtime, std::move(message)) {}
};

}  // namespace mlec
