#pragma once

#include <stdexcept>
#include <string>

namespace hybridlink {

enum class ErrorCode {
  AngleNearPi,
  OutOfRange,
  DimensionMismatch,
  UnknownBody,
  SingularMass,
  NumericalBlowup,
  Underdetermined,
  InfeasibleOrUnbounded,
  NotPsd,
  ParseError,
  ValidationError,
  DegenerateRange,
  InvalidArgument,
  IoError,
};

const char* to_string(ErrorCode code);

// Every failure surfaced by the library carries a machine-readable code so the
// CLI can emit structured error records.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace hybridlink
