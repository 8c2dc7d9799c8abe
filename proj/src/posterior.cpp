#include "lenslike/posterior.hpp"

#include <cmath>
#include <map>
#include <algorithm>
#include <limits>
#include <optional>

#include "lenslike/errors.hpp"
#include "lenslike/parallel.hpp"

namespace lenslike {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)
}

GridLikelihood::GridLikelihood(CalibratedLikelihood model, LikelihoodOptions options)
    : model_(std::move(model)), options_(options) {
  model_.validate();
  const int n = model_.grid->size();
  chol_.reserve(static_cast<std::size_t>(n));
  alpha_.resize(static_cast<std::size_t>(n));
  log_norm_.resize(static_cast<std::size_t>(n));
  for (int g = 0; g < n; ++g) {
    const auto& m = model_.moments[static_cast<std::size_t>(g)];
    chol_.emplace_back(m.cov);
    if (chol_.back().info() != Eigen::Success)
      throw Error(ErrorCode::NotPositiveDefinite,
                  "Cholesky failed at grid point " + std::to_string(g), g);
    const Mat2 l = chol_.back().matrixL();
    const double half_logdet = std::log(l(0, 0)) + std::log(l(1, 1));
    const double alpha = model_.hartlap(g);
    alpha_[static_cast<std::size_t>(g)] = alpha;
    double norm = -kLog2Pi - half_logdet;
    if (options_.hartlap_in_logdet) norm += std::log(alpha);
    log_norm_[static_cast<std::size_t>(g)] = norm;
  }
}

double GridLikelihood::log_likelihood(const Vec2& pred, int g) const {
  const auto k = static_cast<std::size_t>(g);
  const Vec2 r = pred - model_.moments.at(k).mean;
  const Vec2 z = chol_[k].matrixL().solve(r);
  const double q = alpha_[k] * z.squaredNorm();
  if (!std::isfinite(q)) return -std::numeric_limits<double>::infinity();
  return -0.5 * q + log_norm_[k];
}

void GridLikelihood::log_likelihoods(const Vec2& pred, std::span<double> out) const {
  if (static_cast<int>(out.size()) != size())
    throw Error(ErrorCode::ShapeMismatch, "output span does not match the grid size");
  for (int g = 0; g < size(); ++g) out[static_cast<std::size_t>(g)] = log_likelihood(pred, g);
}

double log_likelihood(const Vec2& pred, const CalibratedLikelihood& model, int g) {
  if (g < 0 || g >= model.grid->size())
    throw Error(ErrorCode::InvalidArgument, "grid index out of range");
  return GridLikelihood(model).log_likelihood(pred, g);
}

PosteriorResult grid_posterior(const Vec2& pred, const GridLikelihood& likelihood,
                               std::string map_id) {
  const CosmologyGrid& grid = *likelihood.model().grid;
  const auto n = static_cast<std::size_t>(grid.size());
  std::vector<double> ll(n);
  likelihood.log_likelihoods(pred, ll);
  const double lse = log_sum_exp(ll);
  if (!std::isfinite(lse))
    throw Error(ErrorCode::AllWeightsUnderflow,
                "every grid likelihood underflowed for map '" + map_id + "'");

  PosteriorResult res;
  res.map_id = std::move(map_id);
  res.weights.resize(n);
  for (std::size_t g = 0; g < n; ++g) res.weights[g] = std::exp(ll[g] - lse);
  const double total = pairwise_sum(res.weights);
  for (auto& w : res.weights) w /= total;

  const auto& w = res.weights;
  const auto theta = [&](std::size_t g) { return grid.theta(static_cast<int>(g)); };
  res.mean = pairwise_sum<Vec2>(n, [&](std::size_t g) -> Vec2 { return w[g] * theta(g); });
  const Vec2 var = pairwise_sum<Vec2>(n, [&](std::size_t g) -> Vec2 {
    return w[g] * (theta(g) - res.mean).array().square().matrix();
  });
  res.sigma = var.cwiseSqrt();

  std::size_t top = 0;
  double entropy = 0.0;
  for (std::size_t g = 0; g < n; ++g) {
    if (w[g] > w[top]) top = g;
    if (w[g] > 0.0) entropy -= w[g] * std::log(w[g]);
  }
  res.top_index = static_cast<int>(top);
  res.entropy = entropy;
  return res;
}

double member_marginal_nll(std::span<const Vec2> member_preds, const GridLikelihood& likelihood) {
  if (member_preds.empty()) throw Error(ErrorCode::EmptySet, "member has no predictions");
  const auto n = static_cast<std::size_t>(likelihood.size());
  const double log_g = std::log(static_cast<double>(n));
  std::vector<double> marginal(member_preds.size());
  parallel_for(member_preds.size(), [&](std::size_t i) {
    std::vector<double> ll(n);
    likelihood.log_likelihoods(member_preds[i], ll);
    double lp = log_sum_exp(ll) - log_g;
    if (const auto clamp = likelihood.options().marginal_clamp; clamp && !(lp >= *clamp))
      lp = *clamp;
    marginal[i] = lp;
  });
  return -pairwise_sum(marginal) / static_cast<double>(marginal.size());
}

std::vector<double> ensemble_weights(std::span<const double> nlls) {
  if (nlls.empty()) throw Error(ErrorCode::EmptySet, "no ensemble members");
  double lo = std::numeric_limits<double>::infinity();
  for (double v : nlls) {
    if (std::isnan(v)) throw Error(ErrorCode::InvalidArgument, "NaN member NLL");
    lo = std::min(lo, v);
  }
  if (!std::isfinite(lo)) throw Error(ErrorCode::InvalidArgument, "no member has a finite NLL");
  std::vector<double> w(nlls.size());
  for (std::size_t m = 0; m < nlls.size(); ++m) w[m] = std::exp(-(nlls[m] - lo));
  const double total = pairwise_sum(w);
  for (auto& v : w) v /= total;
  return w;
}

Vec2 ensemble_predict(std::span<const Vec2> member_preds, std::span<const double> weights) {
  if (member_preds.size() != weights.size() || member_preds.empty())
    throw Error(ErrorCode::ShapeMismatch, "one weight per member prediction is required");
  if (std::abs(pairwise_sum(weights) - 1.0) > 1e-9)
    throw Error(ErrorCode::InvalidArgument, "ensemble weights must sum to one");
  return pairwise_sum<Vec2>(member_preds.size(), [&](std::size_t m) -> Vec2 {
    return weights[m] * member_preds[m];
  });
}

bool BatchResult::any_underflow() const {
  for (const auto& r : results)
    if (r.status != PosteriorStatus::Ok) return true;
  return false;
}

BatchResult infer_batch(const PredictionSet& test, const GridLikelihood& likelihood) {
  if (test.kind() != SetKind::Test)
    throw Error(ErrorCode::InvalidArgument, "infer_batch expects a test prediction set");
  if (test.grid().points().size() != likelihood.model().grid->points().size() ||
      !std::equal(test.grid().points().begin(), test.grid().points().end(),
                  likelihood.model().grid->points().begin()))
    throw Error(ErrorCode::ShapeMismatch, "test set and model use different grids");

  BatchResult out;
  out.member_ids = test.members();
  const std::size_t n_members = out.member_ids.size();
  std::map<int, std::size_t> member_slot;
  for (std::size_t m = 0; m < n_members; ++m) member_slot[out.member_ids[m]] = m;

  // map_id -> per-member prediction
  std::map<std::string, std::vector<std::optional<Vec2>>> maps;
  for (const auto& r : test.records()) {
    auto& slots = maps[r.map_id];
    slots.resize(n_members);
    auto& slot = slots[member_slot.at(r.member_id)];
    if (slot)
      throw Error(ErrorCode::InconsistentMembers,
                  "member " + std::to_string(r.member_id) + " predicts map '" + r.map_id +
                      "' more than once");
    slot = r.pred;
  }
  std::vector<std::string> map_ids;
  std::vector<std::vector<Vec2>> preds;  // [map][member]
  map_ids.reserve(maps.size());
  preds.reserve(maps.size());
  for (auto& [id, slots] : maps) {
    std::vector<Vec2> row;
    row.reserve(n_members);
    for (std::size_t m = 0; m < n_members; ++m) {
      if (!slots[m])
        throw Error(ErrorCode::InconsistentMembers,
                    "map '" + id + "' has no prediction from member " +
                        std::to_string(out.member_ids[m]));
      row.push_back(*slots[m]);
    }
    map_ids.push_back(id);
    preds.push_back(std::move(row));
  }

  out.member_nll.resize(n_members);
  std::vector<Vec2> column(preds.size());
  for (std::size_t m = 0; m < n_members; ++m) {
    for (std::size_t i = 0; i < preds.size(); ++i) column[i] = preds[i][m];
    out.member_nll[m] = member_marginal_nll(column, likelihood);
  }
  out.ensemble_weights = ensemble_weights(out.member_nll);

  out.results.resize(preds.size());
  parallel_for(preds.size(), [&](std::size_t i) {
    const Vec2 ens = ensemble_predict(preds[i], out.ensemble_weights);
    PosteriorResult res;
    try {
      res = grid_posterior(ens, likelihood, map_ids[i]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::AllWeightsUnderflow) throw;
      res.map_id = map_ids[i];
      res.status = PosteriorStatus::Underflow;
      res.mean = Vec2::Constant(std::numeric_limits<double>::quiet_NaN());
      res.sigma = res.mean;
    }
    res.ensemble_weights = out.ensemble_weights;
    out.results[i] = std::move(res);
  });
  return out;
}

}  // namespace lenslike
