#include "lenslike/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>

#include "lenslike/errors.hpp"
#include "lenslike/parallel.hpp"

namespace lenslike {

std::vector<MomentEntry> estimate_moments(const CosmologyGroups& groups, double cov_jitter) {
  std::vector<const CosmologyGroups::value_type*> items;
  items.reserve(groups.size());
  for (const auto& kv : groups) items.push_back(&kv);

  std::vector<MomentEntry> out(items.size());
  parallel_for(items.size(), [&](std::size_t k) {
    const int g = items[k]->first;
    const auto& preds = items[k]->second;
    const long n = static_cast<long>(preds.size());
    if (n < 2)
      throw Error(ErrorCode::InsufficientSamples,
                  "grid point " + std::to_string(g) + " has " + std::to_string(n) +
                      " samples; at least 2 are needed",
                  g);
    const Vec2 mean =
        pairwise_sum<Vec2>(preds.size(), [&](std::size_t i) -> Vec2 { return preds[i].pred; }) /
        static_cast<double>(n);
    Mat2 cov = pairwise_sum<Mat2>(preds.size(), [&](std::size_t i) -> Mat2 {
                 const Vec2 r = preds[i].pred - mean;
                 return r * r.transpose();
               }) /
               static_cast<double>(n - 1);
    cov.diagonal().array() += cov_jitter;
    out[k] = MomentEntry{g, mean, cov, n};
  });
  return out;
}

double hartlap_factor(long n_samples, int dim) {
  if (n_samples <= dim + 2)
    throw Error(ErrorCode::DegenerateCorrection,
                "Hartlap factor needs more than " + std::to_string(dim + 2) + " samples, got " +
                    std::to_string(n_samples));
  return static_cast<double>(n_samples - dim - 2) / static_cast<double>(n_samples - 1);
}

double median_knn_distance(const CosmologyGrid& grid, int k) {
  const int n = grid.size();
  if (k < 1 || k >= n)
    throw Error(ErrorCode::InvalidArgument, "k-th neighbour does not exist on this grid");
  std::vector<double> kth(static_cast<std::size_t>(n));
  std::vector<double> dist;
  for (int g = 0; g < n; ++g) {
    dist.clear();
    for (int h = 0; h < n; ++h)
      if (h != g) dist.push_back((grid.theta(g) - grid.theta(h)).norm());
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    kth[static_cast<std::size_t>(g)] = dist[static_cast<std::size_t>(k - 1)];
  }
  std::sort(kth.begin(), kth.end());
  const std::size_t mid = kth.size() / 2;
  return kth.size() % 2 == 1 ? kth[mid] : 0.5 * (kth[mid - 1] + kth[mid]);
}

SmoothingKernel build_kernel(const CosmologyGrid& grid, double sigma_bw) {
  if (!(sigma_bw > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma_bw must be positive");
  const int n = grid.size();
  SmoothingKernel k;
  k.weights = Eigen::MatrixXd::Identity(n, n);
  if (n == 1) {
    k.fallback = true;
    return k;
  }
  if (n < 6) {
    k.fallback = true;
    k.med5 = median_knn_distance(grid, 1);
  } else {
    k.med5 = median_knn_distance(grid, 5);
  }
  k.bandwidth = sigma_bw * k.med5;
  const double inv_two_h2 = 1.0 / (2.0 * k.bandwidth * k.bandwidth);

  std::vector<double> row(static_cast<std::size_t>(n));
  for (int g = 0; g < n; ++g) {
    // The diagonal term is exp(0) = 1 and is the row maximum, so no further
    // shift is needed; off-diagonal terms may underflow to zero.
    for (int h = 0; h < n; ++h) {
      const double d2 = (grid.theta(g) - grid.theta(h)).squaredNorm();
      row[static_cast<std::size_t>(h)] = h == g ? 1.0 : std::exp(-d2 * inv_two_h2);
    }
    const double total = pairwise_sum(row);
    for (int h = 0; h < n; ++h) k.weights(g, h) = row[static_cast<std::size_t>(h)] / total;
  }
  return k;
}

std::vector<MomentEntry> smooth_moments(std::span<const MomentEntry> raw,
                                        const SmoothingKernel& kernel) {
  const auto n = static_cast<std::size_t>(kernel.weights.rows());
  if (raw.size() != n || static_cast<std::size_t>(kernel.weights.cols()) != n)
    throw Error(ErrorCode::ShapeMismatch, "kernel and moment table sizes differ");
  for (std::size_t g = 0; g < n; ++g)
    if (raw[g].grid_index != static_cast<int>(g))
      throw Error(ErrorCode::ShapeMismatch, "moment table is not in grid order");

  std::vector<MomentEntry> out(n);
  parallel_for(n, [&](std::size_t g) {
    const auto w = [&](std::size_t h) { return kernel.weights(static_cast<Eigen::Index>(g),
                                                              static_cast<Eigen::Index>(h)); };
    const Vec2 mean = pairwise_sum<Vec2>(n, [&](std::size_t h) -> Vec2 { return w(h) * raw[h].mean; });
    const Mat2 cov = pairwise_sum<Mat2>(n, [&](std::size_t h) -> Mat2 {
      const Vec2 d = raw[h].mean - mean;
      return w(h) * (raw[h].cov + d * d.transpose());
    });
    out[g] = MomentEntry{static_cast<int>(g), mean, cov, raw[g].n_samples};
  });
  return out;
}

Mat2 shrink_covariance(const Mat2& sigma, double lambda_lw) {
  Mat2 out = (1.0 - lambda_lw) * sigma;
  out(0, 0) = sigma(0, 0);
  out(1, 1) = sigma(1, 1);
  return out;
}

std::vector<double> whiten_residuals(const PredictionSet& val,
                                     std::span<const MomentEntry> moments) {
  std::vector<Eigen::LLT<Mat2>> chol;
  chol.reserve(moments.size());
  for (const auto& m : moments) {
    chol.emplace_back(m.cov);
    if (chol.back().info() != Eigen::Success)
      throw Error(ErrorCode::NotPositiveDefinite,
                  "Cholesky failed at grid point " + std::to_string(m.grid_index),
                  m.grid_index);
  }
  const auto records = val.records();
  std::vector<double> q(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const auto g = static_cast<std::size_t>(records[i].grid_index.value());
    if (g >= moments.size())
      throw Error(ErrorCode::ShapeMismatch, "record refers to a missing moment entry");
    const Vec2 r = records[i].pred - moments[g].mean;
    const Vec2 z = chol[g].matrixL().solve(r);
    q[i] = z.squaredNorm();
  });
  return q;
}

TemperatureFit fit_temperature(std::span<const double> q_values, double p_dof) {
  if (q_values.empty()) throw Error(ErrorCode::EmptySet, "no residuals to fit a temperature");
  if (!(p_dof > 0.0)) throw Error(ErrorCode::InvalidArgument, "p_dof must be positive");
  for (double q : q_values)
    if (!(q >= 0.0) || !std::isfinite(q))
      throw Error(ErrorCode::InvalidArgument, "whitened residuals must be finite and >= 0");
  const double mean = pairwise_sum(q_values) / static_cast<double>(q_values.size());
  if (mean == 0.0) return {1.0, true};
  return {std::sqrt(mean / p_dof), false};
}

CalibratedLikelihood calibrate_full(const PredictionSet& val, const CalibrationConfig& cfg) {
  cfg.validate();
  const auto groups = group_by_cosmology(val);
  const CosmologyGrid& grid = val.grid();
  for (int g = 0; g < grid.size(); ++g)
    if (!groups.contains(g))
      throw Error(ErrorCode::InsufficientSamples,
                  "grid point " + std::to_string(g) + " has no validation samples", g);

  CalibratedLikelihood model;
  model.grid = val.grid_ptr();
  model.config = cfg;

  const auto raw = estimate_moments(groups, cfg.cov_jitter);
  if (cfg.hartlap_enabled) {
    for (const auto& m : raw) {
      try {
        (void)hartlap_factor(m.n_samples, 2);
      } catch (const Error& e) {
        throw Error(ErrorCode::DegenerateCorrection,
                    std::string("grid point ") + std::to_string(m.grid_index) + ": " + e.what(),
                    m.grid_index);
      }
    }
  }

  const auto kernel = build_kernel(grid, cfg.sigma_bw);
  model.med5 = kernel.med5;
  model.bandwidth = kernel.bandwidth;
  if (kernel.fallback && grid.size() > 1)
    model.warnings.push_back("GridTooSmall: fewer than 6 grid points, med5 uses nearest neighbours");

  auto moments = smooth_moments(raw, kernel);
  for (auto& m : moments) m.cov = shrink_covariance(m.cov, cfg.lambda_lw);

  const auto q = whiten_residuals(val, moments);
  const auto fit = fit_temperature(q, cfg.p_dof);
  if (fit.degenerate)
    model.warnings.push_back("DegenerateResiduals: all whitened residuals are zero, tau set to 1");
  model.tau = fit.tau;
  const double tau2 = fit.tau * fit.tau;
  for (auto& m : moments) m.cov *= tau2;
  model.moments = std::move(moments);

  model.provenance["hartlap"] = cfg.hartlap_enabled ? "precision_at_evaluation" : "disabled";
  model.provenance["temperature_fit"] = "after_smoothing_and_shrinkage";
  model.provenance["n_validation"] = std::to_string(val.records().size());
  model.provenance["n_members"] = std::to_string(val.members().size());

  for (const auto& m : model.moments) {
    const Eigen::LLT<Mat2> llt(m.cov);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::NotPositiveDefinite,
                  "calibrated covariance at grid point " + std::to_string(m.grid_index) +
                      " is not positive definite",
                  m.grid_index);
  }
  model.validate();
  return model;
}

}  // namespace lenslike
