#pragma once

#include <cstdint>
#include <vector>

#include "lenslike/grid.hpp"
#include "lenslike/scoring.hpp"

namespace lenslike {

// Generative oracle for desk-scale runs. Predictions at grid point g are
// drawn from N(mu*_g, Sigma*) with
//   mu*_g  = c + mean_shrink * (theta_g - c),   c = grid centroid
//   Sigma* = [[s0^2, r s0 s1], [r s0 s1, s1^2]]
// Validation maps k = 0..n_per_point-1 of each grid point go to member
// k mod members. Each test map draws its true grid point uniformly; member m
// predicts mu* + chol(Sigma*) (sqrt(rho) z_map + sqrt(1 - rho) z_m).
struct SyntheticSpec {
  // Exactly one grid source: explicit points, a lattice, or scattered points.
  std::vector<GridPoint> points;
  int grid_rows = 0;
  int grid_cols = 0;
  int grid_scatter = 0;
  Vec2 box_lo{0.1, 0.6};
  Vec2 box_hi{0.5, 1.0};

  Vec2 noise_sigma{0.02, 0.02};
  double noise_corr = 0.0;
  double mean_shrink = 1.0;
  int members = 1;
  int n_per_point = 256;
  int n_test = 1000;
  double member_corr = 1.0;  // rho above
  std::uint64_t seed = 0;

  void validate() const;
  CosmologyGrid make_grid() const;
  Mat2 noise_cov() const;
};

struct SyntheticData {
  GridPtr grid;
  std::vector<RawRecord> validation;
  std::vector<RawRecord> test;
  std::vector<Truth> truths;
};

SyntheticData simulate(const SyntheticSpec& spec);

}  // namespace lenslike
