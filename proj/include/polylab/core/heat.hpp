#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <span>
#include <vector>

#include "polylab/core/error.hpp"
#include "polylab/core/fft.hpp"
#include "polylab/core/grid.hpp"

namespace polylab {

// Heat kernel of d_t - 1/2 Lap.
inline double heat_kernel(double t, const Point& x, int d) {
  if (!(t > 0.0)) throw DomainError("heat_kernel requires t > 0");
  if (d < 1 || d > 3) throw DomainError("heat_kernel supports d = 1, 2, 3");
  double r2 = 0.0;
  for (int a = 0; a < d; ++a) r2 += x[static_cast<std::size_t>(a)] * x[static_cast<std::size_t>(a)];
  return std::pow(2.0 * std::numbers::pi * t, -0.5 * d) * std::exp(-r2 / (2.0 * t));
}

inline double heat_kernel(double t, double x) { return heat_kernel(t, Point{x, 0.0, 0.0}, 1); }

// Mass removed from a field by the post-transform cleanup.
struct ClampRecord {
  double clamped_mass = 0.0;  // negative ringing set to zero
  double floor_mass = 0.0;    // positive roundoff floor set to zero

  double total() const { return clamped_mass + floor_mass; }
  ClampRecord& operator+=(const ClampRecord& o) {
    clamped_mass += o.clamped_mass;
    floor_mass += o.floor_mass;
    return *this;
  }
};

inline constexpr double kRingingTolerance = 1e-14;

// Clamp negative roundoff in [-tol*max(1,sup), 0) to zero; anything below is a real instability.
// With floor_rel > 0, values below floor_rel*sup are zeroed as well.
inline ClampRecord clamp_ringing(std::span<double> v, double cell_volume, double floor_rel = 0.0) {
  ClampRecord rec;
  double sup = 0.0;
  for (double x : v) sup = std::max(sup, std::abs(x));
  const double tol = kRingingTolerance * std::max(1.0, sup);
  const double floor = floor_rel * sup;
  for (double& x : v) {
    if (x < 0.0) {
      if (x < -tol)
        throw InvariantError("negative value " + std::to_string(x) +
                             " beyond ringing tolerance after heat step");
      rec.clamped_mass -= x;
      x = 0.0;
    } else if (x < floor) {
      rec.floor_mass += x;
      x = 0.0;
    }
  }
  rec.clamped_mass *= cell_volume;
  rec.floor_mass *= cell_volume;
  return rec;
}

// Exact periodic heat semigroup on signed data: multiply the spectrum by exp(-|k|^2 dt / 2).
// The zero mode is untouched, so discrete mass is preserved.
inline void spectral_heat(const Grid& grid, std::vector<double>& values, double dt) {
  if (dt < 0.0) throw DomainError("heat_propagate requires dt >= 0");
  if (dt == 0.0) return;
  RealFft& fft = fft_workspace(grid);
  std::copy(values.begin(), values.end(), fft.real().begin());
  fft.forward();
  thread_local std::map<std::pair<int, double>, std::vector<double>> k2_cache;
  auto& k2 = k2_cache[{grid.points() * 4 + grid.dim(), grid.half_width()}];
  if (k2.empty()) k2 = spectral_k2(grid);
  auto spec = fft.spectrum();
  for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= std::exp(-0.5 * dt * k2[i]);
  fft.backward();
  auto r = fft.real();
  std::copy(r.begin(), r.end(), values.begin());
}

// Density version: spectral step followed by the ringing clamp.
inline ClampRecord heat_propagate_inplace(const Grid& grid, std::vector<double>& values, double dt,
                                          double floor_rel = 0.0) {
  spectral_heat(grid, values, dt);
  if (dt == 0.0) return {};
  return clamp_ringing(values, grid.cell_volume(), floor_rel);
}

inline DensityField heat_propagate(const DensityField& f, double dt, ClampRecord* record = nullptr) {
  DensityField out = f;
  const ClampRecord rec = heat_propagate_inplace(out.grid, out.values, dt);
  if (record) *record += rec;
  out.t = f.t + dt;
  return out;
}

// Spectral derivative d/dx of periodic samples, d = 1.
inline std::vector<double> spectral_derivative(const Grid& grid, std::span<const double> values) {
  if (grid.dim() != 1) throw ConfigError("spectral_derivative is one-dimensional");
  RealFft& fft = fft_workspace(grid);
  std::copy(values.begin(), values.end(), fft.real().begin());
  fft.forward();
  const auto k = spectral_k_1d(grid);
  auto spec = fft.spectrum();
  for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= std::complex<double>(0.0, k[i]);
  fft.backward();
  auto r = fft.real();
  return {r.begin(), r.end()};
}

// Nearest-neighbour lattice heat semigroup exp(t Lap_h / 2): a continuous-time random walk
// with jump rate 1/(2 dx^2) per direction. The kernel e^{-l} I_j(l), l = t/dx^2, is
// strictly positive, so direct convolution preserves positivity exactly.
class LatticeHeat {
 public:
  LatticeHeat(const Grid& grid, double dt) : grid_(grid), dt_(dt) {
    if (!(dt >= 0.0)) throw DomainError("lattice heat requires dt >= 0");
    const double h = grid.spacing();
    const double lam = dt / (h * h);
    const int max_tap = grid.points() / 2 - 1;
    std::vector<double> w;
    if (lam == 0.0) {
      w = {1.0};
    } else if (lam < 600.0) {
      for (int j = 0; j <= max_tap; ++j) {
        const double v = std::exp(-lam) * std::cyl_bessel_i(static_cast<double>(j), lam);
        if (j > 0 && v < 1e-22 * w.front()) break;
        w.push_back(v);
      }
    } else {
      // Bessel weights overflow; a sampled Gaussian of variance lam is accurate to O(1/lam).
      for (int j = 0; j <= max_tap; ++j) {
        const double v = std::exp(-0.5 * j * j / lam);
        if (j > 0 && v < 1e-22) break;
        w.push_back(v);
      }
    }
    double s = w.front();
    for (std::size_t j = 1; j < w.size(); ++j) s += 2.0 * w[j];
    for (double& v : w) v /= s;
    taps_ = std::move(w);
  }

  double dt() const { return dt_; }
  const std::vector<double>& taps() const { return taps_; }

  // Local buffers only: one operator may be shared by concurrent realizations.
  void apply(std::vector<double>& v) const {
    if (taps_.size() == 1) return;
    std::vector<double> scratch(v.size()), padded;
    const int n = grid_.points();
    const std::size_t un = static_cast<std::size_t>(n);
    const std::size_t lines = v.size() / un;
    for (int axis = grid_.dim() - 1; axis >= 0; --axis) {
      // stride of this axis in row-major layout
      std::size_t stride = 1;
      for (int a = grid_.dim() - 1; a > axis; --a) stride *= un;
      for (std::size_t line = 0; line < lines; ++line) {
        const std::size_t outer = line / stride;
        const std::size_t inner = line % stride;
        const std::size_t base = outer * stride * un + inner;
        const std::size_t r = taps_.size() - 1;
        padded.resize(un + 2 * r);
        for (std::size_t k = 0; k < un + 2 * r; ++k) {
          const std::size_t src = (k + un * (r / un + 1) - r) % un;
          padded[k] = v[base + src * stride];
        }
        const double* p = padded.data() + r;
        for (std::size_t i = 0; i < un; ++i) {
          double acc = taps_[0] * p[i];
          for (std::size_t j = 1; j <= r; ++j) acc += taps_[j] * (p[i + j] + p[i - j]);
          scratch[base + i * stride] = acc;
        }
      }
      v.swap(scratch);
    }
  }

 private:
  Grid grid_;
  double dt_;
  std::vector<double> taps_;
};

// (1/2) Lap_h applied to periodic samples; the generator of LatticeHeat.
inline std::vector<double> lattice_half_laplacian(const Grid& grid, std::span<const double> f) {
  const int n = grid.points();
  const std::size_t un = static_cast<std::size_t>(n);
  const double c = 0.5 / (grid.spacing() * grid.spacing());
  std::vector<double> out(f.size(), 0.0);
  for (int axis = 0; axis < grid.dim(); ++axis) {
    std::size_t stride = 1;
    for (int a = grid.dim() - 1; a > axis; --a) stride *= un;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const std::size_t pos = (i / stride) % un;
      const std::size_t up = pos + 1 == un ? i + stride - un * stride : i + stride;
      const std::size_t dn = pos == 0 ? i + (un - 1) * stride : i - stride;
      out[i] += c * (f[up] + f[dn] - 2.0 * f[i]);
    }
  }
  return out;
}

}  // namespace polylab
