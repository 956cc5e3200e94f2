#pragma once

#include <stdexcept>
#include <string>

namespace ddm {

enum class ErrorCode {
  InvalidArgument = 1,
  Shape,
  Io,
  Format,
  Version,
  Checksum,
  Config,
  Diverged,
  Numeric,
  Internal,
};

const char* error_code_name(ErrorCode code) noexcept;

/// Every failure in the core is reported as an Error carrying a code that
/// maps one-to-one onto the C API status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Non-finite loss during training. `step` is the optimizer step that produced it.
class DivergenceError : public Error {
 public:
  DivergenceError(long step, const std::string& what)
      : Error(ErrorCode::Diverged, what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

/// A harness stage failed; the message is prefixed with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, ErrorCode code, const std::string& what)
      : Error(code, stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace ddm
