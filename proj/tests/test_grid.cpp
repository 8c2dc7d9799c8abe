#include <doctest.h>

#include <random>

#include "lenslike/calibrate.hpp"
#include "lenslike/errors.hpp"
#include "lenslike/grid.hpp"

using namespace lenslike;

namespace {

std::vector<GridPoint> scattered(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> om(0.1, 0.5), s8(0.6, 1.0);
  std::vector<GridPoint> pts;
  for (int i = 0; i < n; ++i) pts.push_back({om(rng), s8(rng)});
  return pts;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("grid indices follow lexicographic order") {
  const CosmologyGrid grid({{0.3, 0.8}, {0.1, 0.9}, {0.3, 0.7}, {0.1, 0.6}});
  REQUIRE(grid.size() == 4);
  CHECK(grid[0] == GridPoint{0.1, 0.6});
  CHECK(grid[1] == GridPoint{0.1, 0.9});
  CHECK(grid[2] == GridPoint{0.3, 0.7});
  CHECK(grid[3] == GridPoint{0.3, 0.8});
  CHECK(grid.extent()(0) == doctest::Approx(0.2));
  CHECK(grid.extent()(1) == doctest::Approx(0.3));
}

TEST_CASE("grid rejects duplicates, empties and non-finite points") {
  CHECK(code_of([] { CosmologyGrid({{0.1, 0.2}, {0.1, 0.2}}); }) == ErrorCode::DuplicateGridPoint);
  CHECK_THROWS_AS(CosmologyGrid({}), Error);
  CHECK_THROWS_AS(CosmologyGrid({{std::nan(""), 0.2}}), Error);
}

TEST_CASE("exact label binds to its grid index") {
  const auto pts = scattered(101, 3);
  const auto grid = std::make_shared<const CosmologyGrid>(pts);
  const GridPoint p7 = (*grid)[7];
  const std::vector<RawRecord> raw{{0, "a", Vec2(p7.omega_m, p7.s8), Vec2(0.3, 0.8)}};
  const auto ps = bind_predictions(grid, raw, SetKind::Validation);
  CHECK(*ps.records()[0].grid_index == 7);
}

TEST_CASE("label within tolerance binds; off-grid label is rejected") {
  const auto grid = std::make_shared<const CosmologyGrid>(scattered(101, 4));
  const GridPoint p = (*grid)[12];
  std::vector<RawRecord> raw{{0, "near", Vec2(p.omega_m + 5e-10, p.s8 - 5e-10), Vec2(0.3, 0.8)}};
  CHECK(*bind_predictions(grid, raw, SetKind::Validation).records()[0].grid_index == 12);

  raw[0].truth = Vec2(p.omega_m + 0.5, p.s8);
  try {
    bind_predictions(grid, raw, SetKind::Validation);
    FAIL("expected LabelNotOnGrid");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LabelNotOnGrid);
    CHECK(std::string(e.what()).find("near") != std::string::npos);
  }
}

TEST_CASE("empty record list and unlabelled validation rows") {
  const auto grid = std::make_shared<const CosmologyGrid>(scattered(5, 5));
  CHECK(code_of([&] { bind_predictions(grid, {}, SetKind::Validation); }) == ErrorCode::EmptySet);
  const std::vector<RawRecord> raw{{0, "x", std::nullopt, Vec2(0.3, 0.8)}};
  CHECK(code_of([&] { bind_predictions(grid, raw, SetKind::Validation); }) ==
        ErrorCode::LabelNotOnGrid);
  CHECK_NOTHROW(bind_predictions(grid, raw, SetKind::Test));
}

TEST_CASE("grouping partitions the records") {
  const auto grid = std::make_shared<const CosmologyGrid>(
      std::vector<GridPoint>{{0.1, 0.6}, {0.2, 0.7}});
  std::vector<PredictionRecord> recs;
  for (int i = 0; i < 3; ++i) recs.push_back({0, "a" + std::to_string(i), 0, Vec2(0.1, 0.6)});
  for (int i = 0; i < 2; ++i) recs.push_back({1, "b" + std::to_string(i), 1, Vec2(0.2, 0.7)});
  const PredictionSet ps(grid, recs, SetKind::Validation);
  const auto groups = group_by_cosmology(ps);
  REQUIRE(groups.size() == 2);
  CHECK(groups.at(0).size() == 3);
  CHECK(groups.at(1).size() == 2);
  CHECK(ps.members() == std::vector<int>{0, 1});

  const PredictionSet single(grid, {recs[0]}, SetKind::Validation);
  CHECK(group_by_cosmology(single).size() == 1);
}

TEST_CASE("101 x 256 set groups into 101 groups of 256") {
  const auto grid = std::make_shared<const CosmologyGrid>(scattered(101, 6));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  std::vector<RawRecord> raw;
  for (int g = 0; g < grid->size(); ++g)
    for (int k = 0; k < 256; ++k)
      raw.push_back({k % 3, std::to_string(g) + "-" + std::to_string(k), grid->theta(g),
                     grid->theta(g) + Vec2(0.01 * z(rng), 0.01 * z(rng))});
  const auto ps = bind_predictions(grid, raw, SetKind::Validation);
  const auto groups = group_by_cosmology(ps);
  CHECK(groups.size() == 101);
  std::size_t total = 0;
  for (const auto& [g, recs] : groups) {
    CHECK(recs.size() == 256);
    total += recs.size();
  }
  CHECK(total == raw.size());
}

TEST_CASE("invalid prediction sets") {
  const auto grid = std::make_shared<const CosmologyGrid>(scattered(3, 7));
  CHECK_THROWS_AS(PredictionSet(grid, {{0, "a", 5, Vec2(0, 0)}}, SetKind::Validation), Error);
  CHECK_THROWS_AS(PredictionSet(grid, {{0, "a", 0, Vec2(INFINITY, 0)}}, SetKind::Validation), Error);
}

TEST_CASE("moment entry checks") {
  MomentEntry m;
  m.cov << 1, 0.5, 0.5, 1;
  CHECK_NOTHROW(check_moment(m));
  m.cov(0, 1) = 0.5 + 1e-9;
  CHECK_THROWS_AS(check_moment(m), Error);
  m.cov << 1, 2, 2, 1;  // eigenvalue -1
  CHECK_THROWS_AS(check_moment(m), Error);
}

TEST_CASE("calibration config validation and ordering") {
  CalibrationConfig c;
  CHECK_NOTHROW(c.validate());
  c.sigma_bw = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.lambda_lw = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.p_dof = -1;
  CHECK_THROWS_AS(c.validate(), Error);

  CalibrationConfig a, b;
  b.sigma_bw = 2;
  CHECK(config_less(a, b));
  CHECK_FALSE(config_less(b, a));
  CHECK_FALSE(config_less(a, a));
}
