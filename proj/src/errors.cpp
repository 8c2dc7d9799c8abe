#include "lenslike/errors.hpp"

namespace lenslike {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::DuplicateGridPoint: return "DuplicateGridPoint";
    case ErrorCode::LabelNotOnGrid: return "LabelNotOnGrid";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::DegenerateCorrection: return "DegenerateCorrection";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::AllWeightsUnderflow: return "AllWeightsUnderflow";
    case ErrorCode::InconsistentMembers: return "InconsistentMembers";
    case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorCode::MissingTruth: return "MissingTruth";
    case ErrorCode::EmptySearchSpace: return "EmptySearchSpace";
    case ErrorCode::PredictorShapeRejection: return "PredictorShapeRejection";
    case ErrorCode::ScaleOverflow: return "ScaleOverflow";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::Io: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::optional<int> grid_index)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      grid_index_(grid_index) {}

}  // namespace lenslike
