#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "polylab/core/error.hpp"
#include "polylab/core/grid.hpp"
#include "polylab/core/heat.hpp"
#include "polylab/core/quadrature.hpp"
#include "polylab/io/csv.hpp"

namespace polylab {

// Constant of the dissipation inequality M - E >= M^4 / (C1 D).
inline constexpr double kDissipationC1 = 81.0;
// Envelope 2 * C1^{1/3} for sup t^{2/3} M(t).
inline const double kMaxDecayC0 = 2.0 * std::cbrt(kDissipationC1);

struct MED {
  double M = 0.0;
  double E = 0.0;
  double D = 0.0;  // NaN unless d = 1
};

inline MED med(const DensityField& g) {
  MED r;
  r.M = g.sup();
  double e = 0.0;
  for (double v : g.values) e += v * v;
  r.E = e * g.grid.cell_volume();
  if (g.grid.dim() == 1) {
    const auto gx = spectral_derivative(g.grid, g.values);
    double d = 0.0;
    for (double v : gx) d += v * v;
    r.D = d * g.grid.cell_volume();
  } else {
    r.D = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

// Centered second-order difference version of D, for cross-checking the spectral one.
inline double dirichlet_fd(const DensityField& g) {
  if (g.grid.dim() != 1) throw ConfigError("dirichlet_fd is one-dimensional");
  const std::size_t n = g.values.size();
  const double h = g.grid.spacing();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (g.values[(i + 1) % n] - g.values[(i + n - 1) % n]) / (2.0 * h);
    s += d * d;
  }
  return s * h;
}

struct MomentValue {
  double value = 0.0;
  bool trusted = true;  // false when boundary leakage exceeds the limit
};

// Box rule of |x|^p g with |x| measured from the grid center.
inline double moment(const DensityField& g, double p) {
  if (!(p > 0.0)) throw DomainError("moment order must be positive");
  double s = 0.0;
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    if (g.values[i] == 0.0) continue;
    const double r2 = squared_norm(g.grid.point(i));
    s += (p == 2.0 ? r2 : std::pow(r2, 0.5 * p)) * g.values[i];
  }
  return s * g.grid.cell_volume();
}

inline MomentValue checked_moment(const DensityField& g, double p) {
  return {moment(g, p), boundary_mass(g) < kLeakageLimit};
}

struct InequalityReport {
  std::string name;
  double t = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  double tolerance = 0.0;
  bool applicable = true;
  bool pass = false;
};

inline InequalityReport make_report(std::string name, double t, double lhs, double rhs, double tol) {
  InequalityReport r{std::move(name), t, lhs, rhs, lhs - rhs, tol, true, false};
  r.pass = r.margin >= -tol;
  return r;
}

// M - E >= M^4 / (81 D), with relative slack rel_tol on the right-hand side.
inline InequalityReport check_dissipation(const MED& m, double t = 0.0, double rel_tol = 1e-6) {
  if (!(m.D > 0.0)) {
    InequalityReport r{"dissipation", t, m.M - m.E, 0.0, 0.0, 0.0, false, true};
    return r;  // constant field: inapplicable
  }
  const double rhs = std::pow(m.M, 4) / (kDissipationC1 * m.D);
  return make_report("dissipation", t, m.M - m.E, rhs, rel_tol * rhs);
}

inline InequalityReport check_dissipation(const DensityField& g, double rel_tol = 1e-6) {
  if (g.grid.dim() != 1) throw ConfigError("check_dissipation is one-dimensional");
  return check_dissipation(med(g), g.t, rel_tol);
}

// E <= M (for unit mass), as M - E >= 0.
inline InequalityReport check_energy_bound(const MED& m, double t = 0.0, double tol = 1e-12) {
  return make_report("E<=M", t, m.M, m.E, tol);
}

// t^{2/3} M(t) <= C0.
inline InequalityReport check_max_decay(double t, double M, double C0 = kMaxDecayC0) {
  return make_report("max_decay", t, C0, std::pow(t, 2.0 / 3.0) * M, 0.0);
}

struct ExponentFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr = 0.0;
  std::size_t used = 0;
  std::vector<std::size_t> excluded;  // rows in the window with y <= 0
};

// Least squares on (log t, log y) over rows with t in [t_lo, t_hi].
inline ExponentFit fit_exponent(const std::vector<double>& t, const std::vector<double>& y, double t_lo,
                                double t_hi) {
  if (t.size() != y.size()) throw DomainError("fit_exponent: t and y differ in length");
  ExponentFit f;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t_lo || t[i] > t_hi) continue;
    if (!(y[i] > 0.0) || !(t[i] > 0.0)) {
      f.excluded.push_back(i);
      continue;
    }
    lx.push_back(std::log(t[i]));
    ly.push_back(std::log(y[i]));
  }
  f.used = lx.size();
  if (f.used < 10) throw DomainError("fit_exponent needs at least 10 positive rows in the window");
  const double n = static_cast<double>(f.used);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("fit_exponent: window has a single distinct time");
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double e = ly[i] - f.intercept - f.slope * lx[i];
    rss += e * e;
  }
  f.stderr = std::sqrt(rss / (n - 2.0) / sxx);
  return f;
}

inline double unit_ball_volume(int d) {
  switch (d) {
    case 1: return 2.0;
    case 2: return std::numbers::pi;
    case 3: return 4.0 * std::numbers::pi / 3.0;
  }
  throw DomainError("unit_ball_volume: d must be 1, 2 or 3");
}

// min of int |x|^p g over 0 <= g <= lam, int g = 1: lam times the integral of |x|^p over the
// ball of volume 1/lam, evaluated by radial Gauss-Legendre quadrature.
inline double minimizer_value(double lam, double p, int d) {
  if (!(lam > 0.0) || !(p > 0.0)) throw DomainError("minimizer_value needs lam > 0, p > 0");
  const double wd = unit_ball_volume(d);
  const double r = std::pow(lam * wd, -1.0 / d);
  const auto q = gauss_legendre(32, 0.0, r);
  double s = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i)
    s += q.weights[i] * d * wd * std::pow(q.nodes[i], d - 1) * std::pow(q.nodes[i], p);
  return lam * s;
}

// Lower bound on int |x|^p g for densities bounded by lam. In d = 1 this is the closed form
// 2^{-(p+1)} lam^{-p} / (p+1), half of minimizer_value; for d > 1 it is minimizer_value itself.
inline double minimizer_lower_bound(double lam, double p, int d) {
  if (!(lam > 0.0) || !(p > 0.0)) throw DomainError("minimizer_lower_bound needs lam > 0, p > 0");
  if (d == 1) return std::pow(2.0, -(p + 1.0)) / (p + 1.0) * std::pow(lam, -p);
  return minimizer_value(lam, p, d);
}

inline InequalityReport check_minimizer(const DensityField& g, double p, double rel_tol = 1e-6) {
  const double rhs = minimizer_lower_bound(g.sup(), p, g.grid.dim());
  return make_report("moment_lower_bound_p" + std::to_string(static_cast<int>(p)), g.t, moment(g, p), rhs,
                     rel_tol * rhs);
}

inline CsvTable inequality_table(const std::vector<InequalityReport>& reports) {
  CsvTable t({"name", "t", "lhs", "rhs", "margin", "pass"});
  for (const auto& r : reports)
    t.add({r.name, fmt17(r.t), fmt17(r.lhs), fmt17(r.rhs), fmt17(r.margin), !r.applicable ? "na" : r.pass ? "1" : "0"});
  return t;
}

}  // namespace polylab
