#include <doctest.h>

#include <algorithm>
#include <random>

#include <Eigen/Dense>

#include "lenslike/calibrate.hpp"
#include "lenslike/errors.hpp"

using namespace lenslike;

namespace {

GridPtr lattice(int rows, int cols, double s, double x0 = 0.1, double y0 = 0.6) {
  std::vector<GridPoint> pts;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) pts.push_back({x0 + s * c, y0 + s * r});
  return std::make_shared<const CosmologyGrid>(pts);
}

PredictionSet gaussian_set(const GridPtr& grid, int n, const Mat2& cov, std::uint64_t seed,
                           int members = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  const Mat2 l = Eigen::LLT<Mat2>(cov).matrixL();
  std::vector<PredictionRecord> recs;
  for (int g = 0; g < grid->size(); ++g)
    for (int k = 0; k < n; ++k)
      recs.push_back({k % members, "m" + std::to_string(g) + "-" + std::to_string(k), g,
                      grid->theta(g) + l * Vec2(z(rng), z(rng))});
  return PredictionSet(grid, recs, SetKind::Validation);
}

// k-th nearest distinct neighbour distance by sorting every distance.
double brute_med_knn(const CosmologyGrid& grid, int k) {
  std::vector<double> per_point;
  for (int a = 0; a < grid.size(); ++a) {
    std::vector<double> d;
    for (int b = 0; b < grid.size(); ++b)
      if (a != b) d.push_back(std::hypot(grid[a].omega_m - grid[b].omega_m, grid[a].s8 - grid[b].s8));
    std::sort(d.begin(), d.end());
    per_point.push_back(d[static_cast<std::size_t>(k - 1)]);
  }
  std::sort(per_point.begin(), per_point.end());
  const std::size_t n = per_point.size();
  return n % 2 ? per_point[n / 2] : 0.5 * (per_point[n / 2 - 1] + per_point[n / 2]);
}

}  // namespace

TEST_CASE("two-sample moments") {
  CosmologyGroups groups;
  groups[0] = {{0, "a", 0, Vec2(1, 2)}, {0, "b", 0, Vec2(3, 4)}};
  const auto m = estimate_moments(groups, 1e-10);
  REQUIRE(m.size() == 1);
  CHECK(m[0].mean == Vec2(2, 3));
  CHECK(m[0].cov(0, 0) == doctest::Approx(2 + 1e-10).epsilon(1e-15));
  CHECK(m[0].cov(0, 1) == 2.0);
  CHECK(m[0].cov(1, 0) == 2.0);
  CHECK(m[0].cov(1, 1) == doctest::Approx(2 + 1e-10).epsilon(1e-15));
  CHECK(m[0].n_samples == 2);
}

TEST_CASE("identical predictions give the jitter covariance") {
  CosmologyGroups groups;
  for (int i = 0; i < 10; ++i) groups[0].push_back({0, std::to_string(i), 0, Vec2(5, 5)});
  const auto m = estimate_moments(groups, 1e-10);
  CHECK(m[0].mean == Vec2(5, 5));
  CHECK(m[0].cov == Mat2::Identity() * 1e-10);
}

TEST_CASE("sample mean of 256 Gaussian draws is within 3 standard errors") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> x(0.3, 0.02), y(0.8, 0.05);
  CosmologyGroups groups;
  for (int i = 0; i < 256; ++i) groups[0].push_back({0, std::to_string(i), 0, Vec2(x(rng), y(rng))});
  const auto m = estimate_moments(groups, 0.0);
  CHECK(std::abs(m[0].mean(0) - 0.3) < 3 * 0.02 / 16);
  CHECK(std::abs(m[0].mean(1) - 0.8) < 3 * 0.05 / 16);
}

TEST_CASE("too few samples") {
  CosmologyGroups groups;
  groups[3] = {{0, "a", 3, Vec2(1, 2)}};
  try {
    estimate_moments(groups, 0.0);
    FAIL("expected InsufficientSamples");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientSamples);
    CHECK(e.grid_index() == 3);
  }
}

TEST_CASE("Hartlap factor") {
  CHECK(hartlap_factor(256, 2) == 252.0 / 255.0);
  CHECK(hartlap_factor(5, 2) == 0.25);
  CHECK_THROWS_AS(hartlap_factor(4, 2), Error);
  CHECK_THROWS_AS(hartlap_factor(2, 2), Error);
}

TEST_CASE("med5 on a regular lattice") {
  for (double s : {0.01, 0.05, 0.3}) {
    const auto grid = lattice(10, 10, s);
    const double brute = brute_med_knn(*grid, 5);
    CHECK(brute == doctest::Approx(s * std::sqrt(2.0)).epsilon(1e-12));
    CHECK(median_knn_distance(*grid, 5) == doctest::Approx(brute).epsilon(1e-14));
    const auto k = build_kernel(*grid, 1.0);
    CHECK(k.med5 == doctest::Approx(brute).epsilon(1e-14));
    CHECK_FALSE(k.fallback);
  }
}

TEST_CASE("kernel rows are stochastic and nonnegative") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<GridPoint> pts;
  for (int i = 0; i < 60; ++i) pts.push_back({u(rng), u(rng)});
  const CosmologyGrid grid(pts);
  for (double bw : {1e-3, 0.1, 1.0, 10.0, 1e3}) {
    const auto k = build_kernel(grid, bw);
    CHECK(k.bandwidth == doctest::Approx(bw * k.med5));
    for (int g = 0; g < grid.size(); ++g) {
      CHECK(std::abs(k.weights.row(g).sum() - 1.0) < 1e-9);
      CHECK(k.weights.row(g).minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("small bandwidth limit gives the identity") {
  const auto grid = lattice(4, 4, 0.05);
  const auto k = build_kernel(*grid, 1e-4);
  CHECK((k.weights - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("two-point grid falls back to nearest-neighbour distance") {
  const double D = 0.2;
  const CosmologyGrid grid({{0.1, 0.7}, {0.1 + D, 0.7}});
  const auto k = build_kernel(grid, 1.0);
  CHECK(k.fallback);
  CHECK(k.med5 == doctest::Approx(D).epsilon(1e-14));
  const double near = 1.0 / (1.0 + std::exp(-0.5));
  CHECK(k.weights(0, 0) == doctest::Approx(near).epsilon(1e-14));
  CHECK(k.weights(0, 1) == doctest::Approx(1 - near).epsilon(1e-14));
  CHECK(k.weights(1, 0) == doctest::Approx(1 - near).epsilon(1e-14));
  CHECK(near == doctest::Approx(0.6225).epsilon(1e-4));
}

TEST_CASE("single-point grid kernel is the identity") {
  const CosmologyGrid grid({{0.3, 0.8}});
  const auto k = build_kernel(grid, 1.0);
  CHECK(k.weights.rows() == 1);
  CHECK(k.weights(0, 0) == 1.0);
}

TEST_CASE("smoothing matches the displayed sums") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  const auto grid = lattice(2, 3, 0.1);
  std::vector<MomentEntry> raw;
  for (int g = 0; g < grid->size(); ++g) {
    MomentEntry m;
    m.grid_index = g;
    m.mean = Vec2(u(rng), u(rng));
    const Mat2 a = Mat2::NullaryExpr([&] { return u(rng); });
    m.cov = a * a.transpose() + 0.1 * Mat2::Identity();
    m.n_samples = 10;
    raw.push_back(m);
  }
  const auto kernel = build_kernel(*grid, 0.8);
  const auto out = smooth_moments(raw, kernel);
  for (int g = 0; g < grid->size(); ++g) {
    double mx = 0, my = 0;
    for (int h = 0; h < grid->size(); ++h) {
      mx += kernel.weights(g, h) * raw[h].mean(0);
      my += kernel.weights(g, h) * raw[h].mean(1);
    }
    double s[2][2] = {{0, 0}, {0, 0}};
    for (int h = 0; h < grid->size(); ++h) {
      const double d[2] = {raw[h].mean(0) - mx, raw[h].mean(1) - my};
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          s[a][b] += kernel.weights(g, h) * (raw[h].cov(a, b) + d[a] * d[b]);
    }
    CHECK(out[g].mean(0) == doctest::Approx(mx).epsilon(1e-13));
    CHECK(out[g].mean(1) == doctest::Approx(my).epsilon(1e-13));
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) CHECK(out[g].cov(a, b) == doctest::Approx(s[a][b]).epsilon(1e-12));
    CHECK(Eigen::SelfAdjointEigenSolver<Mat2>(out[g].cov).eigenvalues().minCoeff() >= 0.0);
  }

  // Uniform two-point kernel: each side gets Sigma + (Delta/2)(Delta/2)^T.
  SmoothingKernel half;
  half.weights = Eigen::MatrixXd::Constant(2, 2, 0.5);
  std::vector<MomentEntry> two(2);
  two[0].mean = Vec2(0, 0);
  two[1].mean = Vec2(2, 4);
  two[0].cov = two[1].cov = Mat2::Identity();
  two[1].grid_index = 1;
  const auto sm = smooth_moments(two, half);
  Mat2 expect;
  expect << 1 + 1, 2, 2, 1 + 4;
  CHECK((sm[0].cov - expect).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((sm[1].cov - expect).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("smoothing fixed points") {
  const auto grid = lattice(3, 3, 0.1);
  std::vector<MomentEntry> raw(9);
  for (int g = 0; g < 9; ++g) {
    raw[g].grid_index = g;
    raw[g].mean = Vec2(0.25, 0.75);
    raw[g].cov << 0.5, 0.125, 0.125, 0.25;
  }
  for (double bw : {0.3, 1.0, 4.0}) {
    const auto out = smooth_moments(raw, build_kernel(*grid, bw));
    for (int g = 0; g < 9; ++g) {
      CHECK((out[g].mean - raw[g].mean).cwiseAbs().maxCoeff() < 1e-15);
      CHECK((out[g].cov - raw[g].cov).cwiseAbs().maxCoeff() < 1e-15);
    }
  }
  raw[4].mean = Vec2(1, 2);
  const auto id = smooth_moments(raw, build_kernel(*grid, 1e-6));
  for (int g = 0; g < 9; ++g) {
    CHECK(id[g].mean == raw[g].mean);
    CHECK(id[g].cov == raw[g].cov);
  }
}

TEST_CASE("shrinkage") {
  Mat2 s;
  s << 4, 2, 2, 4;
  Mat2 half;
  half << 4, 1, 1, 4;
  CHECK(shrink_covariance(s, 0.5) == half);
  CHECK(shrink_covariance(s, 0.0) == s);
  const Mat2 diag = shrink_covariance(s, 1.0);
  CHECK(diag(0, 1) == 0.0);
  CHECK(diag(1, 0) == 0.0);
  CHECK(diag.diagonal() == s.diagonal());

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 200; ++t) {
    const Mat2 a = Mat2::NullaryExpr([&] { return u(rng) - 0.5; });
    const Mat2 c = a * a.transpose();
    CHECK(shrink_covariance(c, u(rng)).diagonal() == c.diagonal());
  }
}

TEST_CASE("whitened residuals") {
  const auto grid = std::make_shared<const CosmologyGrid>(std::vector<GridPoint>{{0, 0}});
  std::vector<MomentEntry> m(1);
  m[0].mean = Vec2(1, 1);
  m[0].cov = Mat2::Identity();
  const auto q_of = [&](Vec2 pred) {
    const PredictionSet ps(grid, {{0, "a", 0, pred}}, SetKind::Validation);
    return whiten_residuals(ps, m)[0];
  };
  CHECK(q_of(Vec2(1, 1)) == 0.0);
  CHECK(q_of(Vec2(4, 5)) == doctest::Approx(25.0).epsilon(1e-15));
  m[0].cov << 4, 0, 0, 1;
  CHECK(q_of(Vec2(3, 2)) == doctest::Approx(2.0).epsilon(1e-15));

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 200; ++t) {
    const Mat2 a = Mat2::NullaryExpr([&] { return u(rng); });
    m[0].cov = a * a.transpose() + 0.01 * Mat2::Identity();
    const Vec2 r(u(rng), u(rng));
    const double det = m[0].cov.determinant();
    const double direct = (m[0].cov(1, 1) * r(0) * r(0) - 2 * m[0].cov(0, 1) * r(0) * r(1) +
                           m[0].cov(0, 0) * r(1) * r(1)) /
                          det;
    CHECK(q_of(m[0].mean + r) == doctest::Approx(direct).epsilon(1e-8));
  }

  m[0].cov << 1, 2, 2, 1;
  CHECK_THROWS_AS(q_of(Vec2(0, 0)), Error);
}

TEST_CASE("temperature fit") {
  CHECK(fit_temperature(std::vector<double>(10, 2.0), 2.0).tau == 1.0);
  CHECK(fit_temperature(std::vector<double>(10, 8.0), 2.0).tau == 2.0);
  const auto deg = fit_temperature(std::vector<double>(4, 0.0), 2.0);
  CHECK(deg.tau == 1.0);
  CHECK(deg.degenerate);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  std::vector<double> q(10000);
  for (auto& v : q) {
    const double a = z(rng), b = z(rng);
    v = a * a + b * b;
  }
  const double tau = fit_temperature(q, 2.0).tau;
  CHECK(std::abs(tau - 1.0) < 0.03);

  std::vector<double> q4 = q;
  for (auto& v : q4) v *= 4.0;
  CHECK(fit_temperature(q4, 2.0).tau == 2.0 * tau);
}

TEST_CASE("calibration recovers the generating covariance") {
  const auto grid = lattice(3, 3, 0.1);
  Mat2 truth;
  truth << 1e-4, 3e-5, 3e-5, 2.5e-5;
  const auto val = gaussian_set(grid, 4000, truth, 8);
  CalibrationConfig cfg;
  cfg.sigma_bw = 1e-3;
  cfg.lambda_lw = 0.0;
  const auto model = calibrate_full(val, cfg);
  CHECK(std::abs(model.tau - 1.0) < 0.05);
  for (const auto& m : model.moments) {
    CHECK(std::abs(m.cov(0, 0) / truth(0, 0) - 1) < 0.1);
    CHECK(std::abs(m.cov(1, 1) / truth(1, 1) - 1) < 0.1);
    CHECK(std::abs(m.cov(0, 1) - truth(0, 1)) < 0.1 * std::sqrt(truth(0, 0) * truth(1, 1)));
    CHECK((m.mean - grid->theta(m.grid_index)).norm() < 1e-3);
  }
  CHECK(model.provenance.count("hartlap"));
}

TEST_CASE("single grid point calibration equals sample statistics") {
  const auto grid = std::make_shared<const CosmologyGrid>(std::vector<GridPoint>{{0.3, 0.8}});
  Mat2 cov;
  cov << 4e-4, 1e-4, 1e-4, 9e-4;
  const auto val = gaussian_set(grid, 256, cov, 9);
  CalibrationConfig cfg;
  cfg.lambda_lw = 0.0;
  cfg.cov_jitter = 0.0;
  const auto model = calibrate_full(val, cfg);

  double mx = 0, my = 0;
  for (const auto& r : val.records()) {
    mx += r.pred(0);
    my += r.pred(1);
  }
  mx /= 256;
  my /= 256;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& r : val.records()) {
    sxx += (r.pred(0) - mx) * (r.pred(0) - mx);
    sxy += (r.pred(0) - mx) * (r.pred(1) - my);
    syy += (r.pred(1) - my) * (r.pred(1) - my);
  }
  const double t2 = model.tau * model.tau;
  CHECK(model.moments[0].mean(0) == doctest::Approx(mx).epsilon(1e-13));
  CHECK(model.moments[0].mean(1) == doctest::Approx(my).epsilon(1e-13));
  CHECK(model.moments[0].cov(0, 0) / t2 == doctest::Approx(sxx / 255).epsilon(1e-12));
  CHECK(model.moments[0].cov(0, 1) / t2 == doctest::Approx(sxy / 255).epsilon(1e-12));
  CHECK(model.moments[0].cov(1, 1) / t2 == doctest::Approx(syy / 255).epsilon(1e-12));
  // Temperature on the training residuals: mean q = 2 (N-1)/N exactly.
  CHECK(t2 == doctest::Approx(255.0 / 256.0).epsilon(1e-12));
}

TEST_CASE("full shrinkage gives diagonal covariances") {
  const auto grid = lattice(3, 3, 0.1);
  Mat2 cov;
  cov << 1e-3, 5e-4, 5e-4, 1e-3;
  CalibrationConfig cfg;
  cfg.lambda_lw = 1.0;
  const auto model = calibrate_full(gaussian_set(grid, 50, cov, 10), cfg);
  for (const auto& m : model.moments) {
    CHECK(m.cov(0, 1) == 0.0);
    CHECK(m.cov(1, 0) == 0.0);
  }
}

TEST_CASE("temperature is fitted after shrinkage") {
  const auto grid = lattice(3, 3, 0.1);
  Mat2 cov;
  cov << 1e-3, 8e-4, 8e-4, 1e-3;
  const auto val = gaussian_set(grid, 200, cov, 12);
  CalibrationConfig cfg;
  cfg.sigma_bw = 1e-3;
  cfg.lambda_lw = 0.5;
  const auto model = calibrate_full(val, cfg);

  // The swapped order: temperature on the unshrunk smoothed moments.
  const auto raw = estimate_moments(group_by_cosmology(val), cfg.cov_jitter);
  const auto smoothed = smooth_moments(raw, build_kernel(*grid, cfg.sigma_bw));
  const double tau_swapped = fit_temperature(whiten_residuals(val, smoothed), cfg.p_dof).tau;
  CHECK(std::abs(tau_swapped - model.tau) > 1e-3);

  auto shrunk = smoothed;
  for (auto& m : shrunk) m.cov = shrink_covariance(m.cov, cfg.lambda_lw);
  const double tau_ordered = fit_temperature(whiten_residuals(val, shrunk), cfg.p_dof).tau;
  CHECK(tau_ordered == doctest::Approx(model.tau).epsilon(1e-14));
  for (int g = 0; g < grid->size(); ++g)
    CHECK((model.moments[g].cov - tau_ordered * tau_ordered * shrunk[g].cov).cwiseAbs().maxCoeff() <
          1e-18);
}

TEST_CASE("calibration errors carry grid context") {
  const auto grid = lattice(2, 3, 0.1);
  Mat2 cov = Mat2::Identity() * 1e-4;
  const auto small = gaussian_set(grid, 4, cov, 13);
  try {
    calibrate_full(small, {});
    FAIL("expected DegenerateCorrection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateCorrection);
    CHECK(e.grid_index().has_value());
  }
  CalibrationConfig no_h;
  no_h.hartlap_enabled = false;
  CHECK_NOTHROW(calibrate_full(small, no_h));

  // A grid point with no validation samples.
  auto recs = std::vector<PredictionRecord>(small.records().begin(), small.records().end());
  std::erase_if(recs, [](const PredictionRecord& r) { return *r.grid_index == 2; });
  const PredictionSet missing(grid, recs, SetKind::Validation);
  try {
    calibrate_full(missing, no_h);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.grid_index() == 2);
  }
}
