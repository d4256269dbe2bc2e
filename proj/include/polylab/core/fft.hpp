#pragma once

#include <fftw3.h>

#include <array>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "polylab/core/grid.hpp"

namespace polylab {

namespace detail {
// The FFTW planner is not reentrant; execution on distinct buffers is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
}  // namespace detail

// Real-to-complex transform of an N^d periodic array with owned, aligned buffers.
// backward() consumes the spectrum buffer and applies the 1/N^d normalization.
class RealFft {
 public:
  explicit RealFft(const Grid& grid) : dim_(grid.dim()), n_(grid.points()) {
    real_size_ = grid.size();
    spec_size_ = real_size_ / static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_ / 2 + 1);
    real_.reset(fftw_alloc_real(real_size_));
    spec_.reset(fftw_alloc_complex(spec_size_));
    std::array<int, 3> dims{n_, n_, n_};
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c(dim_, dims.data(), real_.get(), spec_.get(), FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_c2r(dim_, dims.data(), spec_.get(), real_.get(), FFTW_ESTIMATE);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }

  std::span<double> real() { return {real_.get(), real_size_}; }
  std::span<std::complex<double>> spectrum() {
    return {reinterpret_cast<std::complex<double>*>(spec_.get()), spec_size_};
  }
  std::size_t real_size() const { return real_size_; }
  std::size_t spectral_size() const { return spec_size_; }
  int points() const { return n_; }
  int dim() const { return dim_; }

  void forward() { fftw_execute(fwd_); }
  void backward() {
    fftw_execute(bwd_);
    const double s = 1.0 / static_cast<double>(real_size_);
    for (std::size_t i = 0; i < real_size_; ++i) real_.get()[i] *= s;
  }

 private:
  int dim_;
  int n_;
  std::size_t real_size_ = 0;
  std::size_t spec_size_ = 0;
  std::unique_ptr<double, detail::FftwFree> real_;
  std::unique_ptr<fftw_complex, detail::FftwFree> spec_;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

// Per-thread transform cache keyed by (d, N).
inline RealFft& fft_workspace(const Grid& grid) {
  thread_local std::map<std::pair<int, int>, std::unique_ptr<RealFft>> cache;
  auto& slot = cache[{grid.dim(), grid.points()}];
  if (!slot) slot = std::make_unique<RealFft>(grid);
  return *slot;
}

// |k|^2 for every entry of the half-spectrum layout of RealFft.
inline std::vector<double> spectral_k2(const Grid& grid) {
  const int n = grid.points();
  const int nh = n / 2 + 1;
  const double dk = std::numbers::pi / grid.half_width();
  auto wave = [&](int i) { return dk * (i <= n / 2 ? i : i - n); };
  std::vector<double> k2;
  k2.reserve(grid.size() / static_cast<std::size_t>(n) * static_cast<std::size_t>(nh));
  if (grid.dim() == 1) {
    for (int i = 0; i < nh; ++i) k2.push_back(wave(i) * wave(i));
  } else if (grid.dim() == 2) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < nh; ++j) k2.push_back(wave(i) * wave(i) + wave(j) * wave(j));
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < nh; ++l)
          k2.push_back(wave(i) * wave(i) + wave(j) * wave(j) + wave(l) * wave(l));
  }
  return k2;
}

// Signed wavenumbers along the last (half-spectrum) axis, d = 1 only.
inline std::vector<double> spectral_k_1d(const Grid& grid) {
  const int n = grid.points();
  const double dk = std::numbers::pi / grid.half_width();
  std::vector<double> k(static_cast<std::size_t>(n / 2 + 1));
  for (int i = 0; i <= n / 2; ++i) k[static_cast<std::size_t>(i)] = dk * i;
  k.back() = 0.0;  // Nyquist derivative of a real signal is dropped
  return k;
}

// Circular convolution (a * b)(x_i) = sum_j a(x_i - y_j) b(y_j) dV where `a_hat` is the
// transform of `a` sampled with the origin at index 0 of each axis.
inline void convolve_spectral(const Grid& grid, std::span<const std::complex<double>> a_hat,
                              std::span<const double> b, std::span<double> out) {
  RealFft& fft = fft_workspace(grid);
  std::copy(b.begin(), b.end(), fft.real().begin());
  fft.forward();
  auto spec = fft.spectrum();
  for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= a_hat[i];
  fft.backward();
  const double dv = grid.cell_volume();
  auto r = fft.real();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = r[i] * dv;
}

// Transform of samples given in centered layout (origin at N/2 on each axis).
inline std::vector<std::complex<double>> centered_transform(const Grid& grid,
                                                            std::span<const double> centered) {
  RealFft& fft = fft_workspace(grid);
  const int n = grid.points();
  const int h = n / 2;
  auto r = fft.real();
  for (std::size_t i = 0; i < centered.size(); ++i) {
    auto idx = grid.unflatten(i);
    for (int a = 0; a < grid.dim(); ++a) idx[static_cast<std::size_t>(a)] -= h;
    r[grid.flatten(idx)] = centered[i];
  }
  fft.forward();
  auto s = fft.spectrum();
  return {s.begin(), s.end()};
}

}  // namespace polylab
