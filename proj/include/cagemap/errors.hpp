#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cagemap {

/// Base of every error thrown by the toolkit. `code()` is the machine-readable
/// tag surfaced by the CLI and the review service.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& message) : Error("invalid_argument", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("configuration_error", message) {}
};

class UnsupportedTypeError : public Error {
 public:
  explicit UnsupportedTypeError(const std::string& message) : Error("unsupported_type", message) {}
};

class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& message) : Error("undefined_metric", message) {}
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& message) : Error("integrity_error", message) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& message) : Error("not_found", message) {}
};

class ConflictError : public Error {
 public:
  explicit ConflictError(const std::string& message) : Error("conflict", message) {}
};

/// Raised when a sampler cannot restore one of its own invariants.
class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& message) : Error("invariant_violation", message) {}
};

/// Schema violation while loading an artifact. Carries the offending ids.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& message, std::vector<std::string> offending = {})
      : Error("validation_error", message), offending_(std::move(offending)) {}

  const std::vector<std::string>& offending() const noexcept { return offending_; }

 private:
  std::vector<std::string> offending_;
};

}  // namespace cagemap
