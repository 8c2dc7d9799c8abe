#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace lenslike {

enum class ErrorCode {
  Parse,
  InvalidArgument,
  EmptySet,
  DuplicateGridPoint,
  LabelNotOnGrid,
  InsufficientSamples,
  DegenerateCorrection,
  NotPositiveDefinite,
  AllWeightsUnderflow,
  InconsistentMembers,
  NonPositiveSigma,
  MissingTruth,
  EmptySearchSpace,
  PredictorShapeRejection,
  ScaleOverflow,
  ShapeMismatch,
  Io,
};

const char* to_string(ErrorCode code);

// Every library failure is reported through this type; `grid_index` carries
// the offending grid point when one is known.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<int> grid_index = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<int> grid_index() const noexcept { return grid_index_; }

 private:
  ErrorCode code_;
  std::optional<int> grid_index_;
};

}  // namespace lenslike
