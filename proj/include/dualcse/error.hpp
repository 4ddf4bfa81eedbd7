#pragma once

#include <stdexcept>
#include <string>

namespace dualcse {

// Base of every error thrown by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input record: missing field, wrong type, unparsable line.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a domain invariant (empty text, duplicate id, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace dualcse
