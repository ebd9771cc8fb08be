#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace topoprior {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that violates a documented precondition or data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Shapes or options that do not fit together.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed serialized data. `offset` is the byte position where parsing
/// failed, when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// A non-finite loss or gradient.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint with an unknown version or a damaged payload.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Failure talking to an external service. Callers may retry.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, std::string cause)
      : Error(what + ": " + cause), cause_(std::move(cause)) {}
  const std::string& cause() const { return cause_; }
  bool retriable() const { return true; }

 private:
  std::string cause_;
};

}  // namespace topoprior
