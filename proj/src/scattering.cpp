#include "lenslike/scattering.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include <fftw3.h>

#include "lenslike/errors.hpp"
#include "lenslike/parallel.hpp"

namespace lenslike {

namespace {

// FFTW plans for one shape. Planning is serialised; execution with the
// new-array interface is thread-safe.
class FftPlan {
 public:
  FftPlan(std::size_t h, std::size_t w) : n_(h * w) {
    ComplexField scratch(n_);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    forward_ = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf, buf, FFTW_FORWARD,
                                flags);
    backward_ = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf, buf,
                                 FFTW_BACKWARD, flags);
    if (!forward_ || !backward_) throw Error(ErrorCode::InvalidArgument, "FFTW planning failed");
  }
  ~FftPlan() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  void forward(ComplexField& f) const {
    auto* p = reinterpret_cast<fftw_complex*>(f.data());
    fftw_execute_dft(forward_, p, p);
  }
  // Normalised inverse.
  void backward(ComplexField& f) const {
    auto* p = reinterpret_cast<fftw_complex*>(f.data());
    fftw_execute_dft(backward_, p, p);
    const double scale = 1.0 / static_cast<double>(n_);
    for (auto& v : f) v *= scale;
  }

 private:
  std::size_t n_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

const FftPlan& plan_for(std::size_t h, std::size_t w) {
  static std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<FftPlan>> cache;
  const std::lock_guard lock(planner_mutex());
  auto& slot = cache[{h, w}];
  if (!slot) slot = std::make_unique<FftPlan>(h, w);
  return *slot;
}

void check_shape(const Map2D& field, const WaveletBank& bank) {
  field.validate();
  if (field.height != bank.height || field.width != bank.width)
    throw Error(ErrorCode::ShapeMismatch,
                "map is " + std::to_string(field.height) + "x" + std::to_string(field.width) +
                    " but the wavelet bank was built for " + std::to_string(bank.height) + "x" +
                    std::to_string(bank.width));
}

ComplexField masked_spectrum(const Map2D& field) {
  ComplexField f(field.data.size());
  for (std::size_t k = 0; k < f.size(); ++k)
    f[k] = (!field.mask || (*field.mask)[k]) ? field.data[k] : 0.0;
  plan_for(field.height, field.width).forward(f);
  return f;
}

ComplexField filtered(const ComplexField& spectrum, const ComplexField& filter, const FftPlan& plan) {
  ComplexField out(spectrum.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = spectrum[k] * filter[k];
  plan.backward(out);
  return out;
}

struct ValidMean {
  const std::vector<std::uint8_t>* mask;
  double inv_count;

  template <typename T, typename F>
  T operator()(std::size_t n, F&& term) const {
    return pairwise_sum<T>(n, [&](std::size_t k) -> T {
             return (!mask || (*mask)[k]) ? T(term(k)) : T{};
           }) *
           inv_count;
  }
};

}  // namespace

double WaveletBank::frequency(std::size_t bin, std::size_t n) {
  const auto signed_bin = bin < (n + 1) / 2 ? static_cast<double>(bin)
                                            : static_cast<double>(bin) - static_cast<double>(n);
  return 2.0 * std::numbers::pi * signed_bin / static_cast<double>(n);
}

WaveletBank build_bank(std::size_t height, std::size_t width, int J, int L) {
  if (J < 1 || L < 1) throw Error(ErrorCode::InvalidArgument, "J and L must be at least 1");
  if (height == 0 || width == 0) throw Error(ErrorCode::ShapeMismatch, "empty map shape");
  if ((std::size_t{1} << (J - 1)) > std::min(height, width))
    throw Error(ErrorCode::ScaleOverflow, "2^(J-1) = " + std::to_string(1 << (J - 1)) +
                                              " exceeds the map width " +
                                              std::to_string(std::min(height, width)));
  WaveletBank bank;
  bank.height = height;
  bank.width = width;
  bank.J = J;
  bank.L = L;
  bank.filters.reserve(static_cast<std::size_t>(J * L));
  for (int j = 0; j < J; ++j) {
    const double xi = 0.75 * std::numbers::pi / std::ldexp(1.0, j);
    const double s_par = 1.0 / (0.8 * std::ldexp(1.0, j));
    const double s_perp = s_par * std::min(1.0, 4.0 / L);
    const double beta = std::exp(-0.5 * (xi * xi) / (s_par * s_par));
    for (int l = 0; l < L; ++l) {
      const double angle = std::numbers::pi * l / L;
      const double c = std::cos(angle);
      const double s = std::sin(angle);
      ComplexField f(height * width);
      for (std::size_t r = 0; r < height; ++r) {
        const double ky = WaveletBank::frequency(r, height);
        for (std::size_t col = 0; col < width; ++col) {
          const double kx = WaveletBank::frequency(col, width);
          const double kp = c * kx + s * ky;
          const double ko = -s * kx + c * ky;
          const double perp = (ko * ko) / (s_perp * s_perp);
          const double wave = std::exp(-0.5 * ((kp - xi) * (kp - xi) / (s_par * s_par) + perp));
          const double env = std::exp(-0.5 * ((kp * kp) / (s_par * s_par) + perp));
          f[r * width + col] = wave - beta * env;
        }
      }
      bank.filters.push_back(std::move(f));
    }
  }
  return bank;
}

ComplexField wavelet_convolve(const Map2D& field, const WaveletBank& bank, int j, int l) {
  check_shape(field, bank);
  if (j < 0 || j >= bank.J || l < 0 || l >= bank.L)
    throw Error(ErrorCode::InvalidArgument, "wavelet index out of range");
  return filtered(masked_spectrum(field), bank.filter(j, l), plan_for(bank.height, bank.width));
}

std::size_t s3_count(int J, int L) {
  return static_cast<std::size_t>(L * L * J * (J - 1) / 2);
}

std::size_t s4_count(int J, int L) {
  std::size_t n = 0;
  for (int j1 = 0; j1 < J; ++j1) {
    const auto m = static_cast<std::size_t>((J - 1 - j1) * L);
    n += static_cast<std::size_t>(L) * m * m;
  }
  return n;
}

std::size_t s3_index(int J, int L, int j1, int l1, int j2, int l2) {
  std::size_t base = 0;
  for (int a = 0; a < j1; ++a) base += static_cast<std::size_t>(L * (J - 1 - a) * L);
  const auto m = static_cast<std::size_t>((J - 1 - j1) * L);
  return base + static_cast<std::size_t>(l1) * m + static_cast<std::size_t>((j2 - j1 - 1) * L + l2);
}

std::size_t s4_index(int J, int L, int j1, int l1, int j2, int l2, int j3, int l3) {
  std::size_t base = 0;
  for (int a = 0; a < j1; ++a) {
    const auto m = static_cast<std::size_t>((J - 1 - a) * L);
    base += static_cast<std::size_t>(L) * m * m;
  }
  const auto m = static_cast<std::size_t>((J - 1 - j1) * L);
  const auto i2 = static_cast<std::size_t>((j2 - j1 - 1) * L + l2);
  const auto i3 = static_cast<std::size_t>((j3 - j1 - 1) * L + l3);
  return base + static_cast<std::size_t>(l1) * m * m + i2 * m + i3;
}

std::vector<double> ScatteringVector::flatten() const {
  std::vector<double> out;
  out.reserve(s1.size() + s2.size() + 2 * (s3.size() + s4.size()));
  out.insert(out.end(), s1.begin(), s1.end());
  out.insert(out.end(), s2.begin(), s2.end());
  for (const auto& v : s3) {
    out.push_back(v.real());
    out.push_back(v.imag());
  }
  for (const auto& v : s4) {
    out.push_back(v.real());
    out.push_back(v.imag());
  }
  return out;
}

ScatteringVector scattering_cov(const Map2D& field, const WaveletBank& bank) {
  check_shape(field, bank);
  const std::size_t npix = field.data.size();
  const std::size_t nvalid = field.valid_count();
  if (nvalid == 0) throw Error(ErrorCode::InvalidArgument, "map has no valid pixels");
  const ValidMean mean{field.mask ? &*field.mask : nullptr, 1.0 / static_cast<double>(nvalid)};
  const FftPlan& plan = plan_for(bank.height, bank.width);
  const int J = bank.J;
  const int L = bank.L;
  const auto n_lambda = static_cast<std::size_t>(J * L);

  ScatteringVector sv;
  sv.J = J;
  sv.L = L;
  sv.family = bank.family;
  sv.s1.resize(n_lambda);
  sv.s2.resize(n_lambda);
  sv.s3.resize(s3_count(J, L));
  sv.s4.resize(s4_count(J, L));

  const ComplexField spectrum = masked_spectrum(field);
  std::vector<ComplexField> first(n_lambda);     // I * psi_lambda
  std::vector<ComplexField> mod_spec(n_lambda);  // FFT(|I * psi_lambda|), masked
  parallel_for(n_lambda, [&](std::size_t k) {
    first[k] = filtered(spectrum, bank.filters[k], plan);
    const auto& x = first[k];
    sv.s1[k] = mean.operator()<double>(npix, [&](std::size_t p) { return std::abs(x[p]); });
    sv.s2[k] = mean.operator()<double>(npix, [&](std::size_t p) { return std::norm(x[p]); });
    ComplexField m(npix);
    for (std::size_t p = 0; p < npix; ++p)
      m[p] = (!field.mask || (*field.mask)[p]) ? std::abs(x[p]) : 0.0;
    plan.forward(m);
    mod_spec[k] = std::move(m);
  });

  parallel_for(n_lambda, [&](std::size_t k1) {
    const int j1 = static_cast<int>(k1) / L;
    const int l1 = static_cast<int>(k1) % L;
    const auto& psi1 = bank.filters[k1];
    const auto& x1 = first[k1];
    const Complex x1_mean = mean.operator()<Complex>(npix, [&](std::size_t p) { return x1[p]; });

    // |I * psi_2| * psi_1 for every coarser lambda_2.
    const int n_second = (J - 1 - j1) * L;
    std::vector<ComplexField> second(static_cast<std::size_t>(n_second));
    std::vector<Complex> second_mean(static_cast<std::size_t>(n_second));
    for (int i = 0; i < n_second; ++i) {
      const auto k2 = static_cast<std::size_t>((j1 + 1) * L + i);
      second[static_cast<std::size_t>(i)] = filtered(mod_spec[k2], psi1, plan);
      const auto& y = second[static_cast<std::size_t>(i)];
      second_mean[static_cast<std::size_t>(i)] =
          mean.operator()<Complex>(npix, [&](std::size_t p) { return y[p]; });
    }
    for (int i = 0; i < n_second; ++i) {
      const auto& y = second[static_cast<std::size_t>(i)];
      const Complex cross =
          mean.operator()<Complex>(npix, [&](std::size_t p) { return x1[p] * std::conj(y[p]); });
      const int j2 = j1 + 1 + i / L;
      const int l2 = i % L;
      sv.s3[s3_index(J, L, j1, l1, j2, l2)] =
          cross - x1_mean * std::conj(second_mean[static_cast<std::size_t>(i)]);
    }
    for (int i2 = 0; i2 < n_second; ++i2) {
      const auto& y2 = second[static_cast<std::size_t>(i2)];
      for (int i3 = 0; i3 < n_second; ++i3) {
        const auto& y3 = second[static_cast<std::size_t>(i3)];
        const Complex cross =
            mean.operator()<Complex>(npix, [&](std::size_t p) { return y3[p] * std::conj(y2[p]); });
        sv.s4[s4_index(J, L, j1, l1, j1 + 1 + i2 / L, i2 % L, j1 + 1 + i3 / L, i3 % L)] =
            cross - second_mean[static_cast<std::size_t>(i3)] *
                        std::conj(second_mean[static_cast<std::size_t>(i2)]);
      }
    }
  });
  return sv;
}

std::size_t isotropic_dimension(int J, int L) {
  std::size_t n4 = 0;
  for (int j1 = 0; j1 < J; ++j1) n4 += static_cast<std::size_t>((J - 1 - j1) * (J - 1 - j1));
  return static_cast<std::size_t>(2 * J) + 2 * static_cast<std::size_t>(L * J * (J - 1) / 2) +
         2 * static_cast<std::size_t>(L) * n4;
}

std::vector<double> isotropic_reduce(const ScatteringVector& sv) {
  const int J = sv.J;
  const int L = sv.L;
  if (L < 1 || J < 1) throw Error(ErrorCode::InvalidArgument, "empty scattering vector");
  if (sv.s3.size() != s3_count(J, L) || sv.s4.size() != s4_count(J, L))
    throw Error(ErrorCode::ShapeMismatch, "scattering vector does not match its (J, L)");
  std::vector<double> out;
  out.reserve(isotropic_dimension(J, L));
  const double inv_l = 1.0 / L;
  const double inv_l2 = inv_l * inv_l;
  for (const auto* s : {&sv.s1, &sv.s2})
    for (int j = 0; j < J; ++j) {
      const double total = pairwise_sum<double>(static_cast<std::size_t>(L), [&](std::size_t l) {
        return (*s)[static_cast<std::size_t>(j * L) + l];
      });
      out.push_back(total * inv_l);
    }
  for (int j1 = 0; j1 < J; ++j1)
    for (int j2 = j1 + 1; j2 < J; ++j2)
      for (int d = 0; d < L; ++d) {
        const Complex v = pairwise_sum<Complex>(static_cast<std::size_t>(L), [&](std::size_t l1) {
          const int l = static_cast<int>(l1);
          return sv.s3[s3_index(J, L, j1, l, j2, (l + d) % L)];
        }) * inv_l;
        out.push_back(v.real());
        out.push_back(v.imag());
      }
  for (int j1 = 0; j1 < J; ++j1)
    for (int j2 = j1 + 1; j2 < J; ++j2)
      for (int j3 = j1 + 1; j3 < J; ++j3)
        for (int d = 0; d < L; ++d) {
          const Complex v =
              pairwise_sum<Complex>(static_cast<std::size_t>(L * L), [&](std::size_t k) {
                const int l1 = static_cast<int>(k) / L;
                const int l2 = static_cast<int>(k) % L;
                return sv.s4[s4_index(J, L, j1, l1, j2, l2, j3, (l2 + d) % L)];
              }) * inv_l2;
          out.push_back(v.real());
          out.push_back(v.imag());
        }
  return out;
}

}  // namespace lenslike
