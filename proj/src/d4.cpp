#include "lenslike/d4.hpp"

#include <algorithm>
#include <string>

#include "lenslike/errors.hpp"

namespace lenslike {

Map2D::Map2D(std::size_t h, std::size_t w, std::vector<double> values,
             std::optional<std::vector<std::uint8_t>> valid)
    : height(h), width(w), data(std::move(values)), mask(std::move(valid)) {
  if (data.empty()) data.assign(h * w, 0.0);
  validate();
}

std::size_t Map2D::valid_count() const {
  if (!mask) return data.size();
  return static_cast<std::size_t>(std::count_if(mask->begin(), mask->end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

void Map2D::validate() const {
  if (height == 0 || width == 0) throw Error(ErrorCode::ShapeMismatch, "map has an empty side");
  if (data.size() != height * width)
    throw Error(ErrorCode::ShapeMismatch, "map data size does not match its shape");
  if (mask && mask->size() != data.size())
    throw Error(ErrorCode::ShapeMismatch, "mask shape differs from map shape");
}

const char* to_string(D4 t) {
  switch (t) {
    case D4::Identity: return "identity";
    case D4::Rot90: return "rot90";
    case D4::Rot180: return "rot180";
    case D4::Rot270: return "rot270";
    case D4::FlipH: return "flip_h";
    case D4::FlipV: return "flip_v";
    case D4::Transpose: return "transpose";
    case D4::AntiTranspose: return "anti_transpose";
  }
  return "?";
}

namespace {

// Source pixel of output pixel (i, j) for an H x W input.
std::pair<std::size_t, std::size_t> source(D4 t, std::size_t i, std::size_t j, std::size_t h,
                                           std::size_t w) {
  switch (t) {
    case D4::Identity: return {i, j};
    case D4::Rot90: return {j, w - 1 - i};
    case D4::Rot180: return {h - 1 - i, w - 1 - j};
    case D4::Rot270: return {h - 1 - j, i};
    case D4::FlipH: return {i, w - 1 - j};
    case D4::FlipV: return {h - 1 - i, j};
    case D4::Transpose: return {j, i};
    case D4::AntiTranspose: return {h - 1 - j, w - 1 - i};
  }
  return {i, j};
}

template <typename T>
std::vector<T> remap(D4 t, const std::vector<T>& in, std::size_t h, std::size_t w) {
  const bool swap = transposes(t);
  const std::size_t oh = swap ? w : h;
  const std::size_t ow = swap ? h : w;
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      const auto [si, sj] = source(t, i, j, h, w);
      out[i * ow + j] = in[si * w + sj];
    }
  return out;
}

// Cayley table built by acting on a probe with no symmetry.
struct Table {
  D4 product[8][8];
  Table() {
    const Map2D probe(2, 3, {0, 1, 2, 3, 4, 5});
    std::array<Map2D, 8> images;
    for (std::size_t k = 0; k < 8; ++k) images[k] = apply(kD4Elements[k], probe);
    for (std::size_t a = 0; a < 8; ++a)
      for (std::size_t b = 0; b < 8; ++b) {
        const Map2D m = apply(kD4Elements[a], images[b]);
        const auto it = std::find(images.begin(), images.end(), m);
        product[a][b] = kD4Elements[static_cast<std::size_t>(it - images.begin())];
      }
  }
};

const Table& table() {
  static const Table t;
  return t;
}

}  // namespace

Map2D apply(D4 t, const Map2D& map) {
  map.validate();
  Map2D out;
  const bool swap = transposes(t);
  out.height = swap ? map.width : map.height;
  out.width = swap ? map.height : map.width;
  out.data = remap(t, map.data, map.height, map.width);
  if (map.mask) out.mask = remap(t, *map.mask, map.height, map.width);
  return out;
}

D4 compose(D4 second, D4 first) {
  return table().product[static_cast<int>(second)][static_cast<int>(first)];
}

D4 inverse(D4 t) {
  for (D4 u : kD4Elements)
    if (compose(u, t) == D4::Identity) return u;
  return D4::Identity;
}

std::vector<Map2D> d4_orbit(const Map2D& map, bool rect_only) {
  std::vector<Map2D> out;
  if (rect_only) {
    for (D4 t : kRectElements) out.push_back(apply(t, map));
  } else {
    for (D4 t : kD4Elements) out.push_back(apply(t, map));
  }
  return out;
}

Vec2 tta_average(const MapPredictor& predict, const Map2D& map, bool rect_only) {
  std::vector<Vec2> preds;
  const auto run = [&](D4 t) {
    const Map2D img = apply(t, map);
    try {
      preds.push_back(predict(img));
    } catch (const std::exception& e) {
      if (!transposes(t) || img.height == img.width) throw;
      throw Error(ErrorCode::PredictorShapeRejection,
                  std::string("predictor failed on a ") + std::to_string(img.height) + "x" +
                      std::to_string(img.width) + " transposed map: " + e.what());
    }
  };
  if (rect_only) {
    for (D4 t : kRectElements) run(t);
  } else {
    for (D4 t : kD4Elements) run(t);
  }
  std::sort(preds.begin(), preds.end(), [](const Vec2& a, const Vec2& b) {
    return a(0) < b(0) || (a(0) == b(0) && a(1) < b(1));
  });
  const Vec2 total = pairwise_sum<Vec2>(preds.size(), [&](std::size_t i) -> Vec2 { return preds[i]; });
  return total / static_cast<double>(preds.size());
}

}  // namespace lenslike
