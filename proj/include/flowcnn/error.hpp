#pragma once

#include <stdexcept>
#include <string>

namespace flowcnn {

// Failure categories used across the library. The CLI maps each kind to a
// process exit code: configuration errors exit 2, data errors exit 3,
// numeric failures exit 4.
enum class ErrorKind {
  // data / file problems
  MissingFrames,
  MalformedFile,
  InconsistentDims,
  InvalidClip,
  NotDivisible,
  IndexOutOfRange,
  DimMismatch,
  FrameTooSmall,
  ClassMissing,
  EmptySet,
  IoError,
  // configuration problems
  ConfigInvalid,
  OddCount,
  KernelTooDeep,
  PoolTooLarge,
  ArchitectureUnderflow,
  // tensor plumbing
  ShapeMismatch,
  // runtime numerics
  NumericFailure,
};

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

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigInvalid:
    case ErrorKind::OddCount:
    case ErrorKind::KernelTooDeep:
    case ErrorKind::PoolTooLarge:
    case ErrorKind::ArchitectureUnderflow:
      return 2;
    case ErrorKind::NumericFailure:
      return 4;
    default:
      return 3;
  }
}

}  // namespace flowcnn
