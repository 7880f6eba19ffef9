#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace carbonedge {

enum class ErrorKind {
  kParse,         // malformed input row or document
  kValidation,    // input parsed but violates a type invariant
  kSchema,        // unknown or mismatched file schema
  kConfig,        // inconsistent configuration
  kData,          // missing or unresolvable reference between datasets
  kPrecondition,  // caller violated an operation precondition
};

std::string_view to_string(ErrorKind kind);

// All library failures are reported through this exception; the kind drives
// the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace carbonedge
