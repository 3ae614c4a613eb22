#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace copp {

/// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the domain of an operation (empty set, bad label, C > N...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Inconsistent or unknown configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateCloudError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Correlation of a constant vector.
class UndefinedCorrelationError : public DomainError {
 public:
  using DomainError::DomainError;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ManifestError : public std::runtime_error {
 public:
  ManifestError(std::size_t row, const std::string& what)
      : std::runtime_error("manifest row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace copp
