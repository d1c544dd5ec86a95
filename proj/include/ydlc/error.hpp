#pragma once

#include <stdexcept>
#include <string>

namespace ydlc {

// Maps onto the CLI exit-code contract: usage -> 1, data -> 2, invariant -> 3.
enum class ErrorKind { usage, data, invariant };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Tensor shape or argument mismatch inside the compute engine.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::invariant, what) {}
};

// Malformed or truncated external input (files, bitstreams, configs).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what) : Error(ErrorKind::invariant, what) {}
};

}  // namespace ydlc
