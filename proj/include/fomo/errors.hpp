#pragma once

#include <stdexcept>
#include <string>

namespace fomo {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or lengths that do not line up (vector dims, aligned arrays).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Inputs outside their documented domain (non-finite values, bad ranges).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced during computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed files.
class FormatError : public Error {
 public:
  enum class Kind { kBadMagic, kTruncated, kCountMismatch, kMalformed };

  FormatError(Kind kind, const std::string& message)
      : Error(message), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// A data source cannot serve the requested sample quota.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration; carries the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace fomo
