#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lenslike/numeric.hpp"

namespace lenslike {

// Per-coordinate absolute tolerance for matching a label to a grid point.
inline constexpr double kGridMatchTolerance = 1e-9;

struct GridPoint {
  double omega_m = 0.0;
  double s8 = 0.0;

  Vec2 theta() const { return {omega_m, s8}; }
  friend bool operator==(const GridPoint&, const GridPoint&) = default;
  friend auto operator<=>(const GridPoint&, const GridPoint&) = default;
};

// Discrete set of labelled (Omega_m, S_8) points. Indices follow the
// lexicographic order of the points, whatever order they were supplied in.
class CosmologyGrid {
 public:
  explicit CosmologyGrid(std::vector<GridPoint> points);

  int size() const { return static_cast<int>(points_.size()); }
  const GridPoint& operator[](int g) const { return points_.at(static_cast<std::size_t>(g)); }
  Vec2 theta(int g) const { return (*this)[g].theta(); }
  std::span<const GridPoint> points() const { return points_; }

  // Index of the point within `tol` of (omega_m, s8) in both coordinates.
  std::optional<int> find(double omega_m, double s8, double tol = kGridMatchTolerance) const;

  // max - min of each parameter over the grid.
  Vec2 extent() const;

 private:
  std::vector<GridPoint> points_;
};

using GridPtr = std::shared_ptr<const CosmologyGrid>;

// A prediction row as read from disk: validation rows carry the true label.
struct RawRecord {
  int member_id = 0;
  std::string map_id;
  std::optional<Vec2> truth;
  Vec2 pred = Vec2::Zero();
};

struct PredictionRecord {
  int member_id = 0;
  std::string map_id;
  std::optional<int> grid_index;
  Vec2 pred = Vec2::Zero();
};

enum class SetKind { Validation, Test };

class PredictionSet {
 public:
  PredictionSet(GridPtr grid, std::vector<PredictionRecord> records, SetKind kind);

  const CosmologyGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::span<const PredictionRecord> records() const { return records_; }
  SetKind kind() const { return kind_; }
  // Sorted distinct member ids.
  const std::vector<int>& members() const { return members_; }

 private:
  GridPtr grid_;
  std::vector<PredictionRecord> records_;
  SetKind kind_;
  std::vector<int> members_;
};

PredictionSet bind_predictions(GridPtr grid, std::span<const RawRecord> raw, SetKind kind);

using CosmologyGroups = std::map<int, std::vector<PredictionRecord>>;

// Partition of a validation set by true grid point; record order is kept
// within each group.
CosmologyGroups group_by_cosmology(const PredictionSet& ps);

struct MomentEntry {
  int grid_index = 0;
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Zero();
  long n_samples = 0;
};

// Throws NotPositiveDefinite if cov is asymmetric beyond 1e-12 or has an
// eigenvalue below -1e-12.
void check_moment(const MomentEntry& m);

struct CalibrationConfig {
  double sigma_bw = 1.0;
  double lambda_lw = 0.1;
  double p_dof = 2.0;
  bool hartlap_enabled = true;
  double cov_jitter = 1e-10;

  void validate() const;
  friend bool operator==(const CalibrationConfig&, const CalibrationConfig&) = default;
};

// Lexicographic order over (sigma_bw, lambda_lw, p_dof, hartlap, jitter).
bool config_less(const CalibrationConfig& a, const CalibrationConfig& b);

struct CalibratedLikelihood {
  GridPtr grid;
  std::vector<MomentEntry> moments;  // index g holds grid point g
  double tau = 1.0;
  CalibrationConfig config;
  double med5 = 0.0;
  double bandwidth = 0.0;
  std::map<std::string, std::string> provenance;
  std::vector<std::string> warnings;

  // Hartlap factor of grid point g, or 1 when disabled.
  double hartlap(int g) const;
  void validate() const;
};

enum class PosteriorStatus { Ok, Underflow };

struct PosteriorResult {
  std::string map_id;
  std::vector<double> weights;
  Vec2 mean = Vec2::Zero();
  Vec2 sigma = Vec2::Zero();
  std::vector<double> ensemble_weights;
  int top_index = -1;
  double entropy = 0.0;
  PosteriorStatus status = PosteriorStatus::Ok;
};

}  // namespace lenslike
