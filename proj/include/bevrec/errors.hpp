#pragma once

#include <stdexcept>
#include <string>

namespace bevrec {

/// Base of every error raised by the library. The CLI maps any of these to
/// exit status 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents: bad magic, truncation, wrong field count.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

/// Duplicate key on insertion.
class ConflictError : public Error {
 public:
  using Error::Error;
};

/// Operation not valid in the current state (e.g. querying an empty index).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace bevrec
