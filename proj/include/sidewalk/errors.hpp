#pragma once

#include <stdexcept>
#include <string>

namespace sidewalk {

// Every error the library raises derives from Error and carries the CLI
// exit-code category it maps to.
enum class ErrorCategory { usage = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

// Shape or length mismatch between operands.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::usage, what) {}
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(ErrorCategory::usage, what) {}
};

// Operation called out of order (e.g. backward before forward).
class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(ErrorCategory::usage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

// Evaluation is undefined for the given labels (e.g. AUC with one class).
class EvaluationError : public Error {
 public:
  explicit EvaluationError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

}  // namespace sidewalk
