#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sfmdepth {

enum class ErrorCode {
  MissingFile,
  MalformedRecord,
  BrokenReference,
  UnsupportedCameraModel,
  IoFailure,
  UnknownImage,
  EmptySparseDepth,
  DegenerateRange,
  TooFewPoints,
  MissingPrediction,
  NoGroundTruth,
  ShapeMismatch,
  DomainMismatch,
  TooFewSamples,
  DegenerateSamples,
  NoPositiveScaleModel,
  TooFewViews,
  EmptyVolume,
  EmptyPointSet,
  NoOverlap,
  EmptyMesh,
  InvalidSpec,
  InvalidConfig,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::BrokenReference: return "BrokenReference";
    case ErrorCode::UnsupportedCameraModel: return "UnsupportedCameraModel";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::UnknownImage: return "UnknownImage";
    case ErrorCode::EmptySparseDepth: return "EmptySparseDepth";
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::MissingPrediction: return "MissingPrediction";
    case ErrorCode::NoGroundTruth: return "NoGroundTruth";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::DegenerateSamples: return "DegenerateSamples";
    case ErrorCode::NoPositiveScaleModel: return "NoPositiveScaleModel";
    case ErrorCode::TooFewViews: return "TooFewViews";
    case ErrorCode::EmptyVolume: return "EmptyVolume";
    case ErrorCode::EmptyPointSet: return "EmptyPointSet";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

// Every failure raised by the library carries a machine-checkable code; the
// message holds the human context (path, id, view name).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace sfmdepth
