#pragma once

#include <stdexcept>
#include <string>

namespace ppd {

enum class ErrorKind {
  invalid_argument,
  shape_mismatch,
  non_finite,
  io_error,
  parse_error,
  state_error,
};

// All recoverable failures surface as ppd::Error; the kind makes error paths
// assertable in tests without matching message strings.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace ppd
