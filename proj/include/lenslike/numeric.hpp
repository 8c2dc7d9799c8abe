#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

#include <Eigen/Core>

namespace lenslike {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Pairwise (cascade) summation in input order. The split points depend only on
// the length, so the result is reproducible for a given sequence.
template <typename T, typename F>
auto pairwise_sum(std::size_t n, F&& term) -> T {
  constexpr std::size_t kLeaf = 8;
  struct Rec {
    F& f;
    T operator()(std::size_t lo, std::size_t hi) const {
      if (hi - lo <= kLeaf) {
        T acc = f(lo);
        for (std::size_t i = lo + 1; i < hi; ++i) acc = acc + f(i);
        return acc;
      }
      const std::size_t mid = lo + (hi - lo) / 2;
      return (*this)(lo, mid) + (*this)(mid, hi);
    }
  };
  if (n == 0) return T{};
  return Rec{term}(0, n);
}

inline double pairwise_sum(std::span<const double> xs) {
  return pairwise_sum<double>(xs.size(), [&](std::size_t i) { return xs[i]; });
}

// log(sum(exp(x))) with max-subtraction; -inf if every entry is -inf or NaN.
inline double log_sum_exp(std::span<const double> xs) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : xs)
    if (x > hi) hi = x;
  if (!std::isfinite(hi)) return hi > 0 ? hi : -std::numeric_limits<double>::infinity();
  const double s = pairwise_sum<double>(xs.size(), [&](std::size_t i) {
    return std::isnan(xs[i]) ? 0.0 : std::exp(xs[i] - hi);
  });
  return hi + std::log(s);
}

}  // namespace lenslike
