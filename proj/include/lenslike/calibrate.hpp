#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "lenslike/grid.hpp"

namespace lenslike {

// Sample mean and unbiased (N-1) covariance of each group, with `cov_jitter`
// added to the diagonal. Entries come back ordered by grid index.
// Throws InsufficientSamples if a group has fewer than two predictions.
std::vector<MomentEntry> estimate_moments(const CosmologyGroups& groups, double cov_jitter);

// (N - d - 2) / (N - 1); the factor applied to an inverse covariance estimated
// from N samples in d dimensions. Throws DegenerateCorrection for N <= d + 2.
double hartlap_factor(long n_samples, int dim);

struct SmoothingKernel {
  Eigen::MatrixXd weights;  // G x G, rows sum to one
  double bandwidth = 0.0;   // sigma_bw * med5
  double med5 = 0.0;
  // Set when the grid has fewer than six points and med5 fell back to the
  // median nearest-neighbour distance.
  bool fallback = false;
};

// Median distance to the k-th nearest other grid point (k = 1-based).
double median_knn_distance(const CosmologyGrid& grid, int k);

// Gaussian kernel in (Omega_m, S_8) with width sigma_bw * med5.
SmoothingKernel build_kernel(const CosmologyGrid& grid, double sigma_bw);

// mu_bar_g = sum_g' W_gg' mu_g'
// Sigma_bar_g = sum_g' W_gg' [Sigma_g' + (mu_g' - mu_bar_g)(mu_g' - mu_bar_g)^T]
std::vector<MomentEntry> smooth_moments(std::span<const MomentEntry> raw,
                                        const SmoothingKernel& kernel);

// (1 - lambda) * sigma + lambda * diag(sigma)
Mat2 shrink_covariance(const Mat2& sigma, double lambda_lw);

// Squared Mahalanobis distance of every record to the moments of its own grid
// point, via the Cholesky factor. `moments` is indexed by grid index.
std::vector<double> whiten_residuals(const PredictionSet& val,
                                     std::span<const MomentEntry> moments);

struct TemperatureFit {
  double tau = 1.0;
  bool degenerate = false;  // mean residual was zero; tau forced to 1
};

// tau^2 = mean(q) / p_dof.
TemperatureFit fit_temperature(std::span<const double> q_values, double p_dof);

// The full calibration chain on the pooled validation predictions:
// moments -> kernel smoothing -> shrinkage -> temperature -> tau^2 scaling.
// Hartlap factors are not folded into the stored covariances; the likelihood
// evaluator applies them to the precision matrices.
CalibratedLikelihood calibrate_full(const PredictionSet& val, const CalibrationConfig& cfg);

}  // namespace lenslike
