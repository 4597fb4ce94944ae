#pragma once

#include <stdexcept>
#include <string>

namespace malpaca {

enum class ErrorCode {
  UnreadableFile,
  MalformedHeader,
  MalformedRecord,
  EmptySequence,
  LengthMismatch,
  TooFewConnections,
  TooFewPoints,
  KTooLarge,
  UnknownSample,
  EmptyCluster,
  ClusterTooSmall,
  InvalidParams,
  PipelineFailure,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnreadableFile: return "UnreadableFile";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::TooFewConnections: return "TooFewConnections";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::UnknownSample: return "UnknownSample";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::ClusterTooSmall: return "ClusterTooSmall";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::PipelineFailure: return "PipelineFailure";
  }
  return "Unknown";
}

// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace malpaca
