#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace specmatch {

enum class ErrorKind {
  parse,          // malformed file or record
  empty,          // an input that must be non-empty was empty
  degenerate,     // geometric degeneracy (rank-deficient covariance, zero length, ...)
  disconnected,   // graph has more than one connected component
  precondition,   // caller violated an operation's precondition
  dimension,      // size mismatch between arguments
  convergence,    // iterative method ran out of budget
  io,             // file could not be opened or written
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace specmatch
