#pragma once

#include "nlfp/core.hpp"

#include <fftw3.h>

#include <complex>
#include <mutex>
#include <vector>

namespace nlfp {

/// Uniform periodic grid on [x0, x0 + width) with n nodes x_i = x0 + i h.
struct PeriodicGrid {
  double x0 = 0.0;
  double width = 1.0;
  int n = 0;

  double h() const { return width / n; }
  double node(int i) const { return x0 + i * h(); }
  std::vector<double> nodes() const {
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = node(i);
    return out;
  }
  /// Angular wavenumber of the k-th real-FFT mode.
  double wavenumber(int k) const { return 2.0 * kPi * k / width; }
  /// Wraps x into [x0, x0 + width).
  double wrap(double x) const {
    double y = std::fmod(x - x0, width);
    if (y < 0.0) y += width;
    if (y >= width) y -= width;
    return x0 + y;
  }
  static PeriodicGrid centered(double width, int n) { return {-0.5 * width, width, n}; }
};

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Real-to-complex FFT of fixed length (unnormalized forward, inverse scaled by 1/n).
class RealFft {
public:
  explicit RealFft(int n) : n_(n) {
    require(n >= 2, "FFT length must be >= 2");
    real_ = fftw_alloc_real(n);
    spec_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(n, real_, spec_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n, spec_, real_, FFTW_ESTIMATE);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
      fftw_destroy_plan(fwd_);
      fftw_destroy_plan(inv_);
    }
    fftw_free(real_);
    fftw_free(spec_);
  }

  int size() const { return n_; }
  int modes() const { return n_ / 2 + 1; }

  std::vector<std::complex<double>> forward(const std::vector<double>& in) {
    require(static_cast<int>(in.size()) == n_, "FFT input has the wrong length");
    std::copy(in.begin(), in.end(), real_);
    fftw_execute(fwd_);
    std::vector<std::complex<double>> out(modes());
    for (int k = 0; k < modes(); ++k) out[k] = {spec_[k][0], spec_[k][1]};
    return out;
  }

  std::vector<double> inverse(const std::vector<std::complex<double>>& in) {
    require(static_cast<int>(in.size()) == modes(), "FFT spectrum has the wrong length");
    for (int k = 0; k < modes(); ++k) {
      spec_[k][0] = in[k].real();
      spec_[k][1] = in[k].imag();
    }
    fftw_execute(inv_);
    std::vector<double> out(real_, real_ + n_);
    for (double& v : out) v /= n_;
    return out;
  }

  /// Applies a real, even Fourier multiplier m[k], k = 0..n/2.
  std::vector<double> apply_multiplier(const std::vector<double>& in, const std::vector<double>& m) {
    auto s = forward(in);
    for (int k = 0; k < modes(); ++k) s[k] *= m[k];
    return inverse(s);
  }

private:
  int n_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
};

}  // namespace nlfp
