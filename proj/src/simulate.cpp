#include "lenslike/simulate.hpp"

#include <cmath>
#include <cstdio>

#include <Eigen/Cholesky>

#include "lenslike/errors.hpp"
#include "lenslike/rng.hpp"

namespace lenslike {

namespace {

enum Stream : std::uint64_t { kGridStream = 1, kValidationStream = 2, kTestStream = 3 };

std::string padded(const char* prefix, long a, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*ld", width, a);
  return std::string(prefix) + buf;
}

Vec2 draw_pair(Philox& rng) {
  const double a = rng.normal();
  const double b = rng.normal();
  return {a, b};
}

}  // namespace

void SyntheticSpec::validate() const {
  const int sources = (!points.empty() ? 1 : 0) + (grid_rows > 0 || grid_cols > 0 ? 1 : 0) +
                      (grid_scatter > 0 ? 1 : 0);
  if (sources != 1)
    throw Error(ErrorCode::InvalidArgument,
                "specify exactly one grid source: points, rows x cols, or scattered count");
  if ((grid_rows > 0 || grid_cols > 0) && (grid_rows < 1 || grid_cols < 1))
    throw Error(ErrorCode::InvalidArgument, "lattice needs rows >= 1 and cols >= 1");
  if (!(box_hi(0) > box_lo(0)) || !(box_hi(1) > box_lo(1)))
    throw Error(ErrorCode::InvalidArgument, "grid box must have positive extent");
  if (!(noise_sigma(0) > 0.0) || !(noise_sigma(1) > 0.0) || !noise_sigma.allFinite())
    throw Error(ErrorCode::InvalidArgument,
                "generating covariance must be positive definite (sigma > 0)");
  if (!(std::abs(noise_corr) < 1.0))
    throw Error(ErrorCode::InvalidArgument,
                "generating covariance must be positive definite (|corr| < 1)");
  if (!std::isfinite(mean_shrink)) throw Error(ErrorCode::InvalidArgument, "mean_shrink not finite");
  if (members < 1) throw Error(ErrorCode::InvalidArgument, "members must be >= 1");
  if (n_per_point < 2) throw Error(ErrorCode::InvalidArgument, "n_per_point must be >= 2");
  if (n_test < 0) throw Error(ErrorCode::InvalidArgument, "n_test must be >= 0");
  if (!(member_corr >= 0.0 && member_corr <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "member_corr must lie in [0, 1]");
}

CosmologyGrid SyntheticSpec::make_grid() const {
  if (!points.empty()) return CosmologyGrid(points);
  std::vector<GridPoint> pts;
  if (grid_scatter > 0) {
    Philox rng = Philox(seed).split(kGridStream);
    for (int i = 0; i < grid_scatter; ++i) {
      const double u = rng.uniform();
      const double v = rng.uniform();
      pts.push_back({box_lo(0) + u * (box_hi(0) - box_lo(0)), box_lo(1) + v * (box_hi(1) - box_lo(1))});
    }
  } else {
    for (int r = 0; r < grid_rows; ++r)
      for (int c = 0; c < grid_cols; ++c) {
        const double fx = grid_cols > 1 ? static_cast<double>(c) / (grid_cols - 1) : 0.0;
        const double fy = grid_rows > 1 ? static_cast<double>(r) / (grid_rows - 1) : 0.0;
        pts.push_back({box_lo(0) + fx * (box_hi(0) - box_lo(0)),
                       box_lo(1) + fy * (box_hi(1) - box_lo(1))});
      }
  }
  return CosmologyGrid(std::move(pts));
}

Mat2 SyntheticSpec::noise_cov() const {
  const double off = noise_corr * noise_sigma(0) * noise_sigma(1);
  Mat2 c;
  c << noise_sigma(0) * noise_sigma(0), off, off, noise_sigma(1) * noise_sigma(1);
  return c;
}

SyntheticData simulate(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticData out;
  out.grid = std::make_shared<const CosmologyGrid>(spec.make_grid());
  const CosmologyGrid& grid = *out.grid;
  const int n_grid = grid.size();

  Vec2 centre = Vec2::Zero();
  for (int g = 0; g < n_grid; ++g) centre += grid.theta(g);
  centre /= static_cast<double>(n_grid);
  const auto mean_at = [&](int g) -> Vec2 {
    return centre + spec.mean_shrink * (grid.theta(g) - centre);
  };
  const Mat2 chol = Eigen::LLT<Mat2>(spec.noise_cov()).matrixL();

  Philox val_rng = Philox(spec.seed).split(kValidationStream);
  out.validation.reserve(static_cast<std::size_t>(n_grid) * static_cast<std::size_t>(spec.n_per_point));
  for (int g = 0; g < n_grid; ++g) {
    for (int k = 0; k < spec.n_per_point; ++k) {
      const Vec2 pred = mean_at(g) + chol * draw_pair(val_rng);
      out.validation.push_back(
          {k % spec.members, padded("val-g", g, 4) + padded("-", k, 5), grid.theta(g), pred});
    }
  }

  Philox test_rng = Philox(spec.seed).split(kTestStream);
  const double shared = std::sqrt(spec.member_corr);
  const double own = std::sqrt(1.0 - spec.member_corr);
  for (int i = 0; i < spec.n_test; ++i) {
    const int g = static_cast<int>(test_rng.below(static_cast<std::uint64_t>(n_grid)));
    const std::string id = padded("test-", i, 6);
    const Vec2 z_map = draw_pair(test_rng);
    for (int m = 0; m < spec.members; ++m) {
      const Vec2 z_own = draw_pair(test_rng);
      const Vec2 pred = mean_at(g) + chol * (shared * z_map + own * z_own);
      out.test.push_back({m, id, std::nullopt, pred});
    }
    out.truths.push_back({id, grid.theta(g)});
  }
  return out;
}

}  // namespace lenslike
