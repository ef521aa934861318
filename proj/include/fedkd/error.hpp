#pragma once

#include <stdexcept>
#include <string>

namespace fedkd {

// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or architecture (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad input data: ingestion, labels, preprocessing, sharding (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed weight blob or dataset cache.
class FormatError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered during an optimizer update.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t layer_index)
      : Error(what), layer_index_(layer_index) {}
  std::size_t layer_index() const noexcept { return layer_index_; }

 private:
  std::size_t layer_index_;
};

// API misuse, e.g. backward with a stale cache.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Federated protocol violations, e.g. aggregating an empty or mixed-round set.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Inconsistent communication event log.
class AccountingError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedkd
