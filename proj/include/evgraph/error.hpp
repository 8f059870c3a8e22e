#pragma once

#include <stdexcept>
#include <string>

namespace evg {

// Error categories; mirrored one-to-one by the evg_status codes of the C API.
enum class ErrorCode {
  InvalidArgument = 1,  // bad parameter, unknown variant, out-of-range label
  Format = 2,           // malformed event file / manifest / weight index
  Io = 3,               // filesystem failures
  Shape = 4,            // width or dimension mismatch
  Config = 5,           // inconsistent run configuration, width-chain violation
  Numeric = 6,          // non-finite value, zero-norm embedding, divergence
  DegenerateInput = 7,  // empty stream, N < 2 graph, batch < 2
  Determinism = 8,      // closure produced two different values
  Internal = 9,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Format: return "format";
    case ErrorCode::Io: return "io";
    case ErrorCode::Shape: return "shape";
    case ErrorCode::Config: return "config";
    case ErrorCode::Numeric: return "numeric";
    case ErrorCode::DegenerateInput: return "degenerate_input";
    case ErrorCode::Determinism: return "determinism";
    case ErrorCode::Internal: return "internal";
  }
  return "unknown";
}

}  // namespace evg
