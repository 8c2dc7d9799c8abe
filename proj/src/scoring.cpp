#include "lenslike/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

#include "lenslike/calibrate.hpp"
#include "lenslike/errors.hpp"
#include "lenslike/parallel.hpp"
#include "lenslike/posterior.hpp"

namespace lenslike {

double score_single(const Vec2& estimate, const Vec2& sigma, const Vec2& truth, double lambda) {
  if (!(sigma(0) > 0.0) || !(sigma(1) > 0.0))
    throw Error(ErrorCode::NonPositiveSigma, "predicted sigma must be positive");
  const Vec2 e = estimate - truth;
  const Vec2 e2 = e.array().square();
  const Vec2 s2 = sigma.array().square();
  const double chi2 = e2(0) / s2(0) + e2(1) / s2(1);
  const double logdet = std::log(s2(0)) + std::log(s2(1));
  return -(chi2 + logdet + lambda * (e2(0) + e2(1)));
}

ScoreReport evaluate(std::span<const PosteriorResult> results, std::span<const Truth> truths,
                     const CosmologyGrid& grid, double lambda, double sigma_floor) {
  std::unordered_map<std::string, const Truth*> by_id;
  for (const auto& t : truths)
    if (!by_id.emplace(t.map_id, &t).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate truth for map '" + t.map_id + "'");

  Vec2 extent = grid.extent();
  for (int a = 0; a < 2; ++a)
    if (extent(a) == 0.0) extent(a) = 1.0;

  ScoreReport rep;
  rep.lambda = lambda;
  std::vector<double> scores;
  std::vector<double> sq_errors;
  long covered = 0;
  std::map<std::pair<double, double>, std::vector<double>> per_cos;
  for (const auto& r : results) {
    const auto it = by_id.find(r.map_id);
    if (it == by_id.end())
      throw Error(ErrorCode::MissingTruth, "no truth for map '" + r.map_id + "'");
    if (r.status != PosteriorStatus::Ok) {
      ++rep.n_flagged;
      continue;
    }
    const Vec2& truth = it->second->theta;
    const Vec2 sigma = r.sigma.cwiseMax(Vec2::Constant(sigma_floor));
    const double s = score_single(r.mean, sigma, truth, lambda);
    scores.push_back(s);
    const Vec2 err = r.mean - truth;
    for (int a = 0; a < 2; ++a) {
      const double ne = err(a) / extent(a);
      sq_errors.push_back(ne * ne);
      if (std::abs(err(a)) <= sigma(a)) ++covered;
    }
    per_cos[{truth(0), truth(1)}].push_back(s);
  }
  if (scores.empty()) throw Error(ErrorCode::EmptySet, "no scoreable results");

  rep.n_maps = static_cast<int>(scores.size());
  rep.mean_score = pairwise_sum(scores) / static_cast<double>(scores.size());
  rep.mse = pairwise_sum(sq_errors) / static_cast<double>(sq_errors.size());
  rep.coverage = static_cast<double>(covered) / static_cast<double>(sq_errors.size());
  for (const auto& [theta, s] : per_cos) {
    CosmologyScore row;
    row.theta = Vec2(theta.first, theta.second);
    row.grid_index = grid.find(theta.first, theta.second).value_or(-1);
    row.n_maps = static_cast<int>(s.size());
    row.mean_score = pairwise_sum(s) / static_cast<double>(s.size());
    if (s.size() > 1) {
      const double ss = pairwise_sum<double>(s.size(), [&](std::size_t i) {
        const double d = s[i] - row.mean_score;
        return d * d;
      });
      row.standard_error =
          std::sqrt(ss / static_cast<double>(s.size() - 1)) / std::sqrt(static_cast<double>(s.size()));
    }
    rep.per_cosmology.push_back(row);
  }
  return rep;
}

std::vector<CalibrationConfig> SearchSpace::candidates() const {
  std::vector<CalibrationConfig> out;
  for (double bw : sigma_bw)
    for (double lw : lambda_lw)
      for (double dof : p_dof) out.push_back({bw, lw, dof, hartlap_enabled, cov_jitter});
  return out;
}

namespace {

struct Fold {
  PredictionSet set;
  std::vector<Truth> truths;
};

std::string fold_key(const PredictionRecord& r) {
  return std::to_string(r.member_id) + ":" + r.map_id;
}

std::array<Fold, 2> split_folds(const PredictionSet& val) {
  std::array<std::vector<PredictionRecord>, 2> parts;
  const auto& members = val.members();
  if (members.size() >= 2) {
    std::map<int, int> side;
    for (std::size_t k = 0; k < members.size(); ++k) side[members[k]] = static_cast<int>(k % 2);
    for (const auto& r : val.records()) parts[side.at(r.member_id)].push_back(r);
  } else {
    std::vector<PredictionRecord> sorted(val.records().begin(), val.records().end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.map_id < b.map_id; });
    for (std::size_t i = 0; i < sorted.size(); ++i) parts[i % 2].push_back(sorted[i]);
  }
  auto make = [&](std::vector<PredictionRecord> recs) {
    std::vector<Truth> truths;
    truths.reserve(recs.size());
    for (const auto& r : recs) truths.push_back({fold_key(r), val.grid().theta(*r.grid_index)});
    return Fold{PredictionSet(val.grid_ptr(), std::move(recs), SetKind::Validation),
                std::move(truths)};
  };
  if (parts[0].empty() || parts[1].empty())
    throw Error(ErrorCode::EmptySet, "validation set too small for a two-fold split");
  return {make(std::move(parts[0])), make(std::move(parts[1]))};
}

std::vector<PosteriorResult> predict_fold(const Fold& fold, const GridLikelihood& lik) {
  const auto recs = fold.set.records();
  std::vector<PosteriorResult> out(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    try {
      out[i] = grid_posterior(recs[i].pred, lik, fold_key(recs[i]));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::AllWeightsUnderflow) throw;
      out[i].map_id = fold_key(recs[i]);
      out[i].status = PosteriorStatus::Underflow;
    }
  }
  return out;
}

}  // namespace

TuneResult tune_calibration(const PredictionSet& val, std::span<const CalibrationConfig> candidates,
                            double lambda) {
  if (candidates.empty()) throw Error(ErrorCode::EmptySearchSpace, "no candidate configurations");
  const auto folds = split_folds(val);

  std::vector<CandidateResult> table(candidates.size());
  std::vector<ScoreReport> reports(candidates.size());
  parallel_for(candidates.size(), [&](std::size_t c) {
    auto& row = table[c];
    row.position = c;
    row.config = candidates[c];
    try {
      std::array<std::vector<PosteriorResult>, 2> held_out;
      for (int f = 0; f < 2; ++f) {
        const GridLikelihood lik(calibrate_full(folds[f].set, candidates[c]));
        held_out[1 - f] = predict_fold(folds[1 - f], lik);
      }
      std::vector<PosteriorResult> pooled = held_out[0];
      pooled.insert(pooled.end(), held_out[1].begin(), held_out[1].end());
      std::vector<Truth> truths = folds[0].truths;
      truths.insert(truths.end(), folds[1].truths.begin(), folds[1].truths.end());
      for (int f = 0; f < 2; ++f)
        row.fold_scores[f] =
            evaluate(held_out[f], folds[f].truths, val.grid(), lambda).mean_score;
      reports[c] = evaluate(pooled, truths, val.grid(), lambda);
      row.score = reports[c].mean_score;
    } catch (const Error& e) {
      row.score = -std::numeric_limits<double>::infinity();
      row.fold_scores = {row.score, row.score};
      row.error = e.what();
    }
  });

  std::sort(table.begin(), table.end(), [](const CandidateResult& a, const CandidateResult& b) {
    if (a.score != b.score) return a.score > b.score;
    if (config_less(a.config, b.config)) return true;
    if (config_less(b.config, a.config)) return false;
    return a.position < b.position;
  });
  if (!std::isfinite(table.front().score))
    throw Error(ErrorCode::InvalidArgument,
                "every candidate failed; first error: " + table.front().error);

  TuneResult out;
  out.best = table.front().config;
  out.report = reports[table.front().position];
  out.table = std::move(table);
  return out;
}

}  // namespace lenslike
