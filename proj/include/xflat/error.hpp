#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace xflat {

/// Failure categories; the numeric values double as CLI exit codes.
enum class ErrorCategory : int {
  runtime = 1,
  usage = 2,
  config = 3,
  integrity = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Invalid or inconsistent configuration. Carries the offending field name.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(ErrorCategory::config, field.empty() ? what : field + ": " + what),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorCategory::usage, what) {}
};

/// Evaluation outside the domain of a formula (r < R, tangential beams, E <= 0).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCategory::runtime, what) {}
};

/// A feature the data model admits but this build does not evaluate (n_flavors > 2).
class UnsupportedError : public Error {
 public:
  explicit UnsupportedError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

/// Corrupted or mismatched data: radius tags, zero-norm states, snapshot checks.
class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what) : Error(ErrorCategory::integrity, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::runtime, what) {}
};

class StagingError : public Error {
 public:
  explicit StagingError(const std::string& what) : Error(ErrorCategory::runtime, what) {}
};

/// Non-finite amplitudes after a step.
class BlowupError : public Error {
 public:
  BlowupError(std::uint64_t step, const std::string& what)
      : Error(ErrorCategory::runtime, "integration blowup at step " + std::to_string(step) + ": " + what),
        step_(step) {}

  std::uint64_t step() const noexcept { return step_; }

 private:
  std::uint64_t step_;
};

}  // namespace xflat
