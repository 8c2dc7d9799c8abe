#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "lenslike/grid.hpp"

namespace lenslike {

inline constexpr double kDefaultLambda = 1e3;
// Posterior standard deviations are floored at this value before scoring.
inline constexpr double kSigmaFloor = 1e-4;

// -[ sum_a e_a^2 / sigma_a^2 + sum_a log sigma_a^2 + lambda * sum_a e_a^2 ]
// with e = estimate - truth. Throws NonPositiveSigma.
double score_single(const Vec2& estimate, const Vec2& sigma, const Vec2& truth,
                    double lambda = kDefaultLambda);

struct Truth {
  std::string map_id;
  Vec2 theta = Vec2::Zero();
};

struct CosmologyScore {
  int grid_index = -1;  // -1 when the true cosmology is off the grid
  Vec2 theta = Vec2::Zero();
  double mean_score = 0.0;
  double standard_error = 0.0;
  int n_maps = 0;
};

struct ScoreReport {
  double mean_score = 0.0;
  double mse = 0.0;       // squared errors normalised by the grid extent
  double coverage = 0.0;  // fraction of scalar parameters within +-1 sigma
  double lambda = kDefaultLambda;
  int n_maps = 0;
  int n_flagged = 0;  // results skipped because their posterior underflowed
  std::vector<CosmologyScore> per_cosmology;  // sorted by true (Omega_m, S_8)
};

// Scores posterior results against truths matched by map_id. Results with a
// non-Ok status are counted in n_flagged and excluded. Throws MissingTruth.
ScoreReport evaluate(std::span<const PosteriorResult> results, std::span<const Truth> truths,
                     const CosmologyGrid& grid, double lambda = kDefaultLambda,
                     double sigma_floor = kSigmaFloor);

struct SearchSpace {
  std::vector<double> sigma_bw;
  std::vector<double> lambda_lw;
  std::vector<double> p_dof;
  bool hartlap_enabled = true;
  double cov_jitter = 1e-10;

  // Cartesian product in (sigma_bw, lambda_lw, p_dof) listing order.
  std::vector<CalibrationConfig> candidates() const;
};

struct CandidateResult {
  std::size_t position = 0;  // index in the searched candidate list
  CalibrationConfig config;
  double score = 0.0;        // pooled cross-fold mean score; -inf on failure
  std::array<double, 2> fold_scores{};
  std::string error;
};

struct TuneResult {
  CalibrationConfig best;
  ScoreReport report;                 // cross-fold report of the best candidate
  std::vector<CandidateResult> table; // best first
};

// Two-fold cross-validated grid search. Folds split the validation set by
// member id (alternating over sorted ids); with a single member the maps are
// alternated instead. Ties go to the lexicographically smallest config, then
// to the earliest position. Throws EmptySearchSpace.
TuneResult tune_calibration(const PredictionSet& val, std::span<const CalibrationConfig> candidates,
                            double lambda = kDefaultLambda);

}  // namespace lenslike
