#pragma once

#include <stdexcept>
#include <string>

namespace focus {

enum class ErrorCode {
  BehindCamera,
  InsufficientViews,
  DegenerateConfiguration,
  OutOfRange,
  InvalidSpec,
  EmptyMask,
  EmptyCloud,
  EmptyInput,
  EmptyBatch,
  EmptyMesh,
  DegenerateMesh,
  InvalidJacobian,
  Divergence,
  InvalidRequest,
  Io,
  Format,
  Schema,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries a code so callers (the CLI in
/// particular) can branch on the kind of failure without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BehindCamera: return "behind-camera";
    case ErrorCode::InsufficientViews: return "insufficient-views";
    case ErrorCode::DegenerateConfiguration: return "degenerate-configuration";
    case ErrorCode::OutOfRange: return "out-of-range";
    case ErrorCode::InvalidSpec: return "invalid-spec";
    case ErrorCode::EmptyMask: return "empty-mask";
    case ErrorCode::EmptyCloud: return "empty-cloud";
    case ErrorCode::EmptyInput: return "empty-input";
    case ErrorCode::EmptyBatch: return "empty-batch";
    case ErrorCode::EmptyMesh: return "empty-mesh";
    case ErrorCode::DegenerateMesh: return "degenerate-mesh";
    case ErrorCode::InvalidJacobian: return "invalid-jacobian";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::InvalidRequest: return "invalid-request";
    case ErrorCode::Io: return "io";
    case ErrorCode::Format: return "format";
    case ErrorCode::Schema: return "schema";
  }
  return "unknown";
}

}  // namespace focus
