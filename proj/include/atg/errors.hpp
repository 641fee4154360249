#pragma once

#include <stdexcept>
#include <string>

namespace atg {

// Base of every exception thrown by the library. The C API maps each
// subclass onto one atg_status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A domain object failed its invariants. `field()` names the offender.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Caller broke an operation's precondition (stepping a terminal episode,
// sampling an empty pool, zero workers, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Non-finite value detected; `layer()` identifies where.
class NumericFault : public Error {
 public:
  NumericFault(std::string layer, const std::string& what)
      : Error(layer + ": " + what), layer_(std::move(layer)) {}
  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace atg
