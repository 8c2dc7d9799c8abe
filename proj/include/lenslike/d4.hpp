#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "lenslike/numeric.hpp"

namespace lenslike {

// Row-major 2D field with an optional validity mask (1 = valid pixel).
struct Map2D {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;
  std::optional<std::vector<std::uint8_t>> mask;

  Map2D() = default;
  Map2D(std::size_t h, std::size_t w, std::vector<double> values = {},
        std::optional<std::vector<std::uint8_t>> valid = std::nullopt);

  double& operator()(std::size_t i, std::size_t j) { return data[i * width + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * width + j]; }
  bool valid(std::size_t i, std::size_t j) const { return !mask || (*mask)[i * width + j] != 0; }
  std::size_t valid_count() const;

  // Throws ShapeMismatch when data/mask sizes disagree with the shape.
  void validate() const;

  friend bool operator==(const Map2D&, const Map2D&) = default;
};

enum class D4 { Identity, Rot90, Rot180, Rot270, FlipH, FlipV, Transpose, AntiTranspose };

inline constexpr std::array<D4, 8> kD4Elements{D4::Identity, D4::Rot90,     D4::Rot180,
                                               D4::Rot270,   D4::FlipH,     D4::FlipV,
                                               D4::Transpose, D4::AntiTranspose};
// Elements that keep an H x W map H x W.
inline constexpr std::array<D4, 4> kRectElements{D4::Identity, D4::Rot180, D4::FlipH, D4::FlipV};

const char* to_string(D4 t);

// True when t swaps the height and width.
constexpr bool transposes(D4 t) {
  return t == D4::Rot90 || t == D4::Rot270 || t == D4::Transpose || t == D4::AntiTranspose;
}

// Rotations are counter-clockwise; FlipH mirrors columns, FlipV mirrors rows.
Map2D apply(D4 t, const Map2D& map);

// The element equal to applying `second` after `first`.
D4 compose(D4 second, D4 first);
D4 inverse(D4 t);

// Images of the map under every group element, in kD4Elements order (or
// kRectElements order when rect_only).
std::vector<Map2D> d4_orbit(const Map2D& map, bool rect_only = false);

using MapPredictor = std::function<Vec2(const Map2D&)>;

// Mean prediction over the orbit. Predictions are summed in sorted order, so
// the result is bit-identical for every map of the same orbit.
Vec2 tta_average(const MapPredictor& predict, const Map2D& map, bool rect_only = false);

}  // namespace lenslike
