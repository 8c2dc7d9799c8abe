#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "lenslike/d4.hpp"

namespace lenslike {

using Complex = std::complex<double>;
using ComplexField = std::vector<Complex>;  // row-major, same shape as the map

inline constexpr const char* kMorletFamily = "morlet-fd-v1";

// Frequency-domain Morlet filters on the FFT grid of an H x W map.
// Filter (j, l) peaks at |k| = (3 pi / 4) 2^-j along angle l * pi / L and has
// exactly zero response at k = 0.
struct WaveletBank {
  std::size_t height = 0;
  std::size_t width = 0;
  int J = 0;
  int L = 0;
  std::string family = kMorletFamily;
  std::vector<ComplexField> filters;  // index j * L + l

  const ComplexField& filter(int j, int l) const {
    return filters[static_cast<std::size_t>(j * L + l)];
  }
  // Frequency (kx, ky) in radians per pixel of FFT bin (row, col).
  static double frequency(std::size_t bin, std::size_t n);
};

// Throws ScaleOverflow unless 2^(J-1) <= min(H, W); InvalidArgument for J, L < 1.
WaveletBank build_bank(std::size_t height, std::size_t width, int J = 6, int L = 4);

// Circular convolution IFFT(FFT(I) * psi_hat). Masked pixels are zero-filled
// before the transform. Throws ShapeMismatch.
ComplexField wavelet_convolve(const Map2D& field, const WaveletBank& bank, int j, int l);

// Scattering covariance coefficients.
//   s1[j*L+l]  = <|I * psi_jl|>
//   s2[j*L+l]  = <|I * psi_jl|^2>
//   s3 over (j1, l1, j2 > j1, l2), innermost last:
//        Cov[I * psi_1, |I * psi_2| * psi_1]
//   s4 over (j1, l1, j2 > j1, l2, j3 > j1, l3):
//        Cov[|I * psi_3| * psi_1, |I * psi_2| * psi_1]
// with Cov[X, Y] = <X Y*> - <X><Y*> and <.> the mean over valid pixels.
struct ScatteringVector {
  int J = 0;
  int L = 0;
  std::string family;
  std::vector<double> s1;
  std::vector<double> s2;
  std::vector<Complex> s3;
  std::vector<Complex> s4;

  // s1, s2, then (re, im) of s3 and s4.
  std::vector<double> flatten() const;
};

std::size_t s3_count(int J, int L);
std::size_t s4_count(int J, int L);
std::size_t s3_index(int J, int L, int j1, int l1, int j2, int l2);
std::size_t s4_index(int J, int L, int j1, int l1, int j2, int l2, int j3, int l3);

ScatteringVector scattering_cov(const Map2D& field, const WaveletBank& bank);

// Orientation-averaged coefficients:
//   S1, S2: mean over l                                  -> J each
//   S3: (j1, j2, d = l2 - l1 mod L), mean over l1        -> (re, im)
//   S4: (j1, j2, j3, d = l3 - l2 mod L), mean over l1, l2 -> (re, im)
std::vector<double> isotropic_reduce(const ScatteringVector& sv);
std::size_t isotropic_dimension(int J, int L);

}  // namespace lenslike
