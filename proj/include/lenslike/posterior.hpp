#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "lenslike/grid.hpp"

namespace lenslike {

struct LikelihoodOptions {
  // When set, the Hartlap factor also enters the normalisation
  // -1/2 log det(2 pi Sigma / alpha). Off by default: alpha scales only the
  // quadratic form.
  bool hartlap_in_logdet = false;
  // Per-map marginal log-likelihoods below this value are clamped before
  // member NLLs are averaged. nullopt disables the clamp.
  std::optional<double> marginal_clamp = -700.0;
};

// Read-only evaluator over a calibrated model: Cholesky factors and
// normalisation constants are computed once per grid point.
class GridLikelihood {
 public:
  explicit GridLikelihood(CalibratedLikelihood model, LikelihoodOptions options = {});

  const CalibratedLikelihood& model() const { return model_; }
  const LikelihoodOptions& options() const { return options_; }
  int size() const { return model_.grid->size(); }

  // log N(pred; mu_g, Sigma_g) with precision alpha_H * Sigma_g^{-1}.
  double log_likelihood(const Vec2& pred, int g) const;
  void log_likelihoods(const Vec2& pred, std::span<double> out) const;

 private:
  CalibratedLikelihood model_;
  LikelihoodOptions options_;
  std::vector<Eigen::LLT<Mat2>> chol_;
  std::vector<double> alpha_;
  std::vector<double> log_norm_;
};

double log_likelihood(const Vec2& pred, const CalibratedLikelihood& model, int g);

// Discrete posterior under a uniform prior on the grid. Throws
// AllWeightsUnderflow when no grid point has a finite log-likelihood.
PosteriorResult grid_posterior(const Vec2& pred, const GridLikelihood& likelihood,
                               std::string map_id = {});

// -(1/N) sum_i log[(1/G) sum_g N(pred_i; mu_g, Sigma_g)]
double member_marginal_nll(std::span<const Vec2> member_preds, const GridLikelihood& likelihood);

// softmax(-nll), max-shifted.
std::vector<double> ensemble_weights(std::span<const double> nlls);

Vec2 ensemble_predict(std::span<const Vec2> member_preds, std::span<const double> weights);

struct BatchResult {
  std::vector<PosteriorResult> results;  // ordered by map_id
  std::vector<int> member_ids;           // sorted
  std::vector<double> member_nll;
  std::vector<double> ensemble_weights;

  bool any_underflow() const;
};

// Ensemble-weighted inference over a test set. Every map must carry exactly
// one prediction per member. Maps whose posterior underflows are returned
// with status Underflow instead of aborting the batch.
BatchResult infer_batch(const PredictionSet& test, const GridLikelihood& likelihood);

}  // namespace lenslike
