#pragma once

#include <stdexcept>
#include <string>

namespace stpnet {

/// Shape or size disagreement between arguments.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A domain-level precondition that the caller violated (bad index, empty input, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Exact enumeration requested above the supported unit count.
class EnumerationTooLarge : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Malformed or unreadable input document or binary file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Run configuration failed validation. `field` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A numerical procedure did not reach its acceptance bound (e.g. a calibration fit).
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stpnet
