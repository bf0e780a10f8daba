#pragma once

#include <stdexcept>
#include <string>

namespace poststrat {

/// Broad failure classes. The CLI maps each one to a distinct exit code.
enum class ErrorCategory { config, data, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Bad options, malformed config files, unknown factor or term names.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error(ErrorCategory::config, message) {}
};

/// Input data violating a schema or a precondition (unknown level, empty cell, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& message)
      : Error(ErrorCategory::data, message) {}
};

/// Rank deficiency, singular systems, non-convergence.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& message)
      : Error(ErrorCategory::numerical, message) {}
};

inline const char* category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::data: return "data";
    case ErrorCategory::numerical: return "numerical";
  }
  return "unknown";
}

inline int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::numerical: return 4;
  }
  return 1;
}

}  // namespace poststrat
