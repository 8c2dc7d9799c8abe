#include "lenslike/grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <tuple>

#include <Eigen/Eigenvalues>

#include "lenslike/calibrate.hpp"
#include "lenslike/errors.hpp"

namespace lenslike {

namespace {

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string label(double omega_m, double s8) {
  return "(" + shortest(omega_m) + ", " + shortest(s8) + ")";
}

}  // namespace

CosmologyGrid::CosmologyGrid(std::vector<GridPoint> points) : points_(std::move(points)) {
  if (points_.empty()) throw Error(ErrorCode::EmptySet, "cosmology grid has no points");
  for (const auto& p : points_) {
    if (!std::isfinite(p.omega_m) || !std::isfinite(p.s8))
      throw Error(ErrorCode::InvalidArgument, "non-finite grid coordinate");
  }
  std::sort(points_.begin(), points_.end());
  const auto dup = std::adjacent_find(points_.begin(), points_.end());
  if (dup != points_.end())
    throw Error(ErrorCode::DuplicateGridPoint,
                "duplicate grid point " + label(dup->omega_m, dup->s8));
}

std::optional<int> CosmologyGrid::find(double omega_m, double s8, double tol) const {
  // Points are sorted by omega_m first, so only a narrow slice can match.
  const auto lo = std::lower_bound(points_.begin(), points_.end(), omega_m - tol,
                                   [](const GridPoint& p, double v) { return p.omega_m < v; });
  std::optional<int> best;
  double best_dist = 0.0;
  for (auto it = lo; it != points_.end() && it->omega_m <= omega_m + tol; ++it) {
    const double d = std::max(std::abs(it->omega_m - omega_m), std::abs(it->s8 - s8));
    if (d <= tol && (!best || d < best_dist)) {
      best = static_cast<int>(it - points_.begin());
      best_dist = d;
    }
  }
  return best;
}

Vec2 CosmologyGrid::extent() const {
  Vec2 lo = points_.front().theta();
  Vec2 hi = lo;
  for (const auto& p : points_) {
    lo = lo.cwiseMin(p.theta());
    hi = hi.cwiseMax(p.theta());
  }
  return hi - lo;
}

PredictionSet::PredictionSet(GridPtr grid, std::vector<PredictionRecord> records, SetKind kind)
    : grid_(std::move(grid)), records_(std::move(records)), kind_(kind) {
  if (!grid_) throw Error(ErrorCode::InvalidArgument, "prediction set without a grid");
  if (records_.empty()) throw Error(ErrorCode::EmptySet, "prediction set has no records");
  std::set<int> members;
  for (const auto& r : records_) {
    if (!r.pred.allFinite())
      throw Error(ErrorCode::InvalidArgument, "non-finite prediction for map " + r.map_id);
    if (r.grid_index && (*r.grid_index < 0 || *r.grid_index >= grid_->size()))
      throw Error(ErrorCode::LabelNotOnGrid, "grid index out of range for map " + r.map_id);
    if (kind_ == SetKind::Validation && !r.grid_index)
      throw Error(ErrorCode::LabelNotOnGrid, "validation record without label: " + r.map_id);
    members.insert(r.member_id);
  }
  members_.assign(members.begin(), members.end());
}

PredictionSet bind_predictions(GridPtr grid, std::span<const RawRecord> raw, SetKind kind) {
  if (!grid) throw Error(ErrorCode::InvalidArgument, "bind_predictions without a grid");
  if (raw.empty()) throw Error(ErrorCode::EmptySet, "no prediction records");
  std::vector<PredictionRecord> bound;
  bound.reserve(raw.size());
  for (const auto& r : raw) {
    PredictionRecord rec{r.member_id, r.map_id, std::nullopt, r.pred};
    if (kind == SetKind::Validation) {
      if (!r.truth)
        throw Error(ErrorCode::LabelNotOnGrid, "validation record without label: " + r.map_id);
      rec.grid_index = grid->find((*r.truth)(0), (*r.truth)(1));
      if (!rec.grid_index)
        throw Error(ErrorCode::LabelNotOnGrid,
                    "label " + label((*r.truth)(0), (*r.truth)(1)) + " of map " + r.map_id +
                        " is not a grid point");
    }
    bound.push_back(std::move(rec));
  }
  return PredictionSet(std::move(grid), std::move(bound), kind);
}

CosmologyGroups group_by_cosmology(const PredictionSet& ps) {
  if (ps.kind() != SetKind::Validation)
    throw Error(ErrorCode::InvalidArgument, "only validation sets can be grouped by cosmology");
  CosmologyGroups groups;
  for (const auto& r : ps.records()) groups[*r.grid_index].push_back(r);
  return groups;
}

void check_moment(const MomentEntry& m) {
  constexpr double kTol = 1e-12;
  if (!m.mean.allFinite() || !m.cov.allFinite())
    throw Error(ErrorCode::NotPositiveDefinite, "non-finite moments", m.grid_index);
  if (std::abs(m.cov(0, 1) - m.cov(1, 0)) > kTol)
    throw Error(ErrorCode::NotPositiveDefinite, "covariance not symmetric", m.grid_index);
  const Eigen::SelfAdjointEigenSolver<Mat2> eig(m.cov, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -kTol)
    throw Error(ErrorCode::NotPositiveDefinite, "covariance has a negative eigenvalue",
                m.grid_index);
}

void CalibrationConfig::validate() const {
  if (!(sigma_bw > 0.0) || !std::isfinite(sigma_bw))
    throw Error(ErrorCode::InvalidArgument, "sigma_bw must be positive");
  if (!(lambda_lw >= 0.0 && lambda_lw <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "lambda_lw must lie in [0, 1]");
  if (!(p_dof > 0.0) || !std::isfinite(p_dof))
    throw Error(ErrorCode::InvalidArgument, "p_dof must be positive");
  if (!(cov_jitter >= 0.0) || !std::isfinite(cov_jitter))
    throw Error(ErrorCode::InvalidArgument, "cov_jitter must be nonnegative");
}

bool config_less(const CalibrationConfig& a, const CalibrationConfig& b) {
  return std::tie(a.sigma_bw, a.lambda_lw, a.p_dof, a.hartlap_enabled, a.cov_jitter) <
         std::tie(b.sigma_bw, b.lambda_lw, b.p_dof, b.hartlap_enabled, b.cov_jitter);
}

double CalibratedLikelihood::hartlap(int g) const {
  if (!config.hartlap_enabled) return 1.0;
  return hartlap_factor(moments.at(static_cast<std::size_t>(g)).n_samples, 2);
}

void CalibratedLikelihood::validate() const {
  if (!grid) throw Error(ErrorCode::InvalidArgument, "calibrated likelihood without a grid");
  config.validate();
  if (static_cast<int>(moments.size()) != grid->size())
    throw Error(ErrorCode::ShapeMismatch, "expected one moment entry per grid point");
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
  for (std::size_t g = 0; g < moments.size(); ++g) {
    const auto& m = moments[g];
    if (m.grid_index != static_cast<int>(g))
      throw Error(ErrorCode::ShapeMismatch, "moment entries out of grid order");
    check_moment(m);
    const Eigen::SelfAdjointEigenSolver<Mat2> eig(m.cov, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > 0.0))
      throw Error(ErrorCode::NotPositiveDefinite, "calibrated covariance is singular",
                  m.grid_index);
  }
}

}  // namespace lenslike
