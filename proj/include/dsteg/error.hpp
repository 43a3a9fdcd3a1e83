#pragma once

#include <stdexcept>
#include <string>

namespace dsteg {

enum class ErrorKind {
  InvalidArgument,
  ShapeMismatch,
  LengthMismatch,
  NonFinite,
  Capacity,
  Io,
  Decode,
  Format,
  Unsupported,
};

const char* to_string(ErrorKind kind) noexcept;

/// Every failure in the library surfaces as this exception; `kind()` lets
/// callers (and tests) tell the categories apart without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::ShapeMismatch: return "shape mismatch";
    case ErrorKind::LengthMismatch: return "length mismatch";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::Capacity: return "capacity exceeded";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::Decode: return "decode error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Unsupported: return "unsupported";
  }
  return "unknown";
}

}  // namespace dsteg
