#pragma once

#include <cmath>
#include <complex>
#include <sstream>
#include <string>
#include <vector>

#include "polylab/core/error.hpp"
#include "polylab/core/fft.hpp"
#include "polylab/core/grid.hpp"
#include "polylab/core/profiles.hpp"

namespace polylab {

enum class KernelKind { dirac, smooth_bump };

// Spatial covariance R = phi (autocorrelation) phi of the environment, with the mollifier phi.
// Dirac: R = delta, realized on the lattice as delta_ij / dx (d = 1 only).
struct CovarianceKernel {
  KernelKind kind = KernelKind::dirac;
  Grid grid;
  ProfileSpec phi_spec;
  std::vector<double> phi;                    // centered samples, unit mass
  std::vector<double> R;                      // centered samples
  std::vector<std::complex<double>> phi_hat;  // transform, origin at index 0
  std::vector<std::complex<double>> R_hat;    // transform, origin at index 0
  double R0 = 0.0;

  bool is_dirac() const { return kind == KernelKind::dirac; }

  std::string id() const {
    if (is_dirac()) return "dirac";
    std::ostringstream os;
    os << "bump:" << to_string(phi_spec.kind) << ":" << phi_spec.width;
    return os.str();
  }

  // R(x_i - x_j) for flat indices; offsets wrap periodically.
  double R_between(std::size_t i, std::size_t j) const {
    if (is_dirac()) return i == j ? R0 : 0.0;
    auto a = grid.unflatten(i);
    const auto b = grid.unflatten(j);
    const int h = grid.points() / 2;
    for (int k = 0; k < grid.dim(); ++k) {
      const std::size_t ku = static_cast<std::size_t>(k);
      a[ku] = a[ku] - b[ku] + h;
    }
    return R[grid.flatten(a)];
  }

  // (R * q)(x_i) = sum_j R(x_i - y_j) q_j dV.
  std::vector<double> convolve(std::span<const double> q) const {
    if (is_dirac()) return {q.begin(), q.end()};
    std::vector<double> out(q.size());
    convolve_spectral(grid, R_hat, q, out);
    return out;
  }

  // (phi * w)(x_i) = sum_j phi(x_i - y_j) w_j dV.
  void mollify(std::span<const double> w, std::span<double> out) const {
    if (is_dirac()) {
      std::copy(w.begin(), w.end(), out.begin());
      return;
    }
    convolve_spectral(grid, phi_hat, w, out);
  }
};

inline CovarianceKernel make_dirac_kernel(const Grid& grid) {
  if (grid.dim() != 1) throw ConfigError("the Dirac covariance is restricted to d = 1");
  CovarianceKernel k;
  k.kind = KernelKind::dirac;
  k.grid = grid;
  k.R0 = 1.0 / grid.spacing();
  return k;
}

inline CovarianceKernel make_kernel(const ProfileSpec& phi_spec, const Grid& grid) {
  if (phi_spec.kind == ProfileKind::gaussian)
    throw ConfigError("mollifier must be compactly supported");
  if (support_radius(phi_spec, grid) > 0.5 * grid.half_width())
    throw ConfigError("mollifier support exceeds half the domain");
  CovarianceKernel k;
  k.kind = KernelKind::smooth_bump;
  k.grid = grid;
  k.phi_spec = phi_spec;
  k.phi = sample_profile(phi_spec, grid);
  k.phi_hat = centered_transform(grid, k.phi);

  // R_j = sum_i phi_{i+j} phi_i dV  <=>  R_hat = dV |phi_hat|^2
  const double dv = grid.cell_volume();
  RealFft& fft = fft_workspace(grid);
  auto spec = fft.spectrum();
  for (std::size_t i = 0; i < spec.size(); ++i) spec[i] = dv * std::norm(k.phi_hat[i]);
  fft.backward();
  const std::vector<double> origin0(fft.real().begin(), fft.real().end());

  // centered layout, symmetrized so that R(x) = R(-x) holds bitwise
  const int h = grid.points() / 2;
  k.R.assign(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    auto idx = grid.unflatten(i);
    auto neg = idx;
    for (int a = 0; a < grid.dim(); ++a) {
      const std::size_t au = static_cast<std::size_t>(a);
      idx[au] -= h;
      neg[au] = -(idx[au]);
    }
    k.R[i] = 0.5 * (origin0[grid.flatten(idx)] + origin0[grid.flatten(neg)]);
  }
  k.R_hat = centered_transform(grid, k.R);
  k.R0 = k.R[grid.flatten({h, h, h})];
  return k;
}

inline CovarianceKernel make_kernel(KernelKind kind, const ProfileSpec& phi_spec, const Grid& grid) {
  return kind == KernelKind::dirac ? make_dirac_kernel(grid) : make_kernel(phi_spec, grid);
}

}  // namespace polylab
