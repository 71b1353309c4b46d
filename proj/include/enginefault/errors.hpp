#pragma once

#include <stdexcept>
#include <string>

namespace enginefault {

// Base for all library errors so callers can catch one type at the boundary.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad argument values or shapes supplied by the caller.
class InvalidArgumentError : public Error {
 public:
  explicit InvalidArgumentError(const std::string& msg) : Error(msg) {}
};

// Tensor operand shapes do not match the operation's contract.
class ShapeError : public InvalidArgumentError {
 public:
  explicit ShapeError(const std::string& msg) : InvalidArgumentError(msg) {}
};

// Index outside [0, N).
class IndexError : public Error {
 public:
  explicit IndexError(const std::string& msg) : Error(msg) {}
};

// Invalid model/run configuration detected at build or validation time.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Filesystem / serialization failure, message carries the path.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// A data column that cannot be repaired (e.g. all values missing).
class UnrecoverableColumnError : public Error {
 public:
  explicit UnrecoverableColumnError(const std::string& msg) : Error(msg) {}
};

// Checkpoint file is truncated or structurally inconsistent.
class CorruptCheckpointError : public IoError {
 public:
  explicit CorruptCheckpointError(const std::string& msg) : IoError(msg) {}
};

}  // namespace enginefault
