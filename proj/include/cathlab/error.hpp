#pragma once

#include <stdexcept>
#include <string>

namespace cathlab {

// Failure categories. The CLI maps these onto exit codes and the HTTP
// service onto status codes, so keep the list short and stable.
enum class ErrorCode {
  InvalidArgument,     // caller violated a documented precondition
  DegeneratePose,      // azimuth undefined (view along the vertical axis)
  DegenerateProjection,
  Bounds,              // geometry leaves the volume / empty geometry
  SizeMismatch,
  MalformedFile,
  IndexOutOfRange,
  NonManifold,
  NotClosed,
  Orientation,
  IllPosed,
  InsufficientData,
  Undefined,           // metric undefined for the given input (e.g. zero variance)
  MatchingFailure,
  Io,
};

const char* to_string(ErrorCode code) noexcept;

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

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace cathlab
