#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "polylab/core/error.hpp"
#include "polylab/core/grid.hpp"
#include "polylab/core/heat.hpp"

namespace polylab {

enum class ProfileKind {
  box,       // indicator of [-w/2, w/2)^d
  smooth,    // exp(-1/(1 - r^2/w^2)) on r < w
  gauss_cc,  // (exp(-r^2/2w^2) - exp(-50))_+ , support radius 10w
  gaussian,  // heat kernel G_{w^2}, not compactly supported
  plateau,   // height-1/w plateau of width w with erf edges of width w/20
  delta      // smooth bump of width 4 dx standing in for a point mass
};

struct ProfileSpec {
  ProfileKind kind = ProfileKind::gauss_cc;
  double width = 1.0;
};

inline ProfileKind parse_profile_kind(const std::string& s) {
  if (s == "box") return ProfileKind::box;
  if (s == "smooth" || s == "bump") return ProfileKind::smooth;
  if (s == "gauss_cc") return ProfileKind::gauss_cc;
  if (s == "gaussian" || s == "gauss") return ProfileKind::gaussian;
  if (s == "plateau") return ProfileKind::plateau;
  if (s == "delta") return ProfileKind::delta;
  throw ConfigError("unknown profile '" + s + "' (box|bump|gauss_cc|gaussian|plateau|delta)");
}

inline std::string to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::box: return "box";
    case ProfileKind::smooth: return "bump";
    case ProfileKind::gauss_cc: return "gauss_cc";
    case ProfileKind::gaussian: return "gaussian";
    case ProfileKind::plateau: return "plateau";
    case ProfileKind::delta: return "delta";
  }
  return "?";
}

// Radius beyond which the profile vanishes (infinity for the Gaussian).
inline double support_radius(const ProfileSpec& spec, const Grid& grid) {
  switch (spec.kind) {
    case ProfileKind::box: return 0.5 * spec.width * std::sqrt(static_cast<double>(grid.dim()));
    case ProfileKind::smooth: return spec.width;
    case ProfileKind::gauss_cc: return 10.0 * spec.width;
    case ProfileKind::gaussian: return INFINITY;
    case ProfileKind::plateau: return 0.5 * spec.width + 0.5 * spec.width;
    case ProfileKind::delta: return 2.0 * grid.spacing();
  }
  return INFINITY;
}

// Unnormalized profile value at x.
inline double profile_value(const ProfileSpec& spec, const Grid& grid, const Point& x) {
  const double r2 = squared_norm(x);
  const double w = spec.width;
  switch (spec.kind) {
    case ProfileKind::box: {
      const double eps = 1e-9 * grid.spacing();
      for (int a = 0; a < grid.dim(); ++a) {
        const double xa = x[static_cast<std::size_t>(a)];
        if (xa < -0.5 * w - eps || xa >= 0.5 * w - eps) return 0.0;
      }
      return 1.0;
    }
    case ProfileKind::smooth: {
      const double s = r2 / (w * w);
      return s < 1.0 ? std::exp(-1.0 / (1.0 - s)) : 0.0;
    }
    case ProfileKind::gauss_cc:
      return std::max(0.0, std::exp(-r2 / (2.0 * w * w)) - std::exp(-50.0));
    case ProfileKind::gaussian:
      return heat_kernel(w * w, x, grid.dim());
    case ProfileKind::plateau: {
      double v = 1.0;
      const double s = w / 20.0;
      for (int a = 0; a < grid.dim(); ++a) {
        const double xa = x[static_cast<std::size_t>(a)];
        v *= 0.5 * (std::erf((xa + 0.5 * w) / (std::sqrt(2.0) * s)) -
                    std::erf((xa - 0.5 * w) / (std::sqrt(2.0) * s)));
      }
      return v;
    }
    case ProfileKind::delta: {
      const double rad = 2.0 * grid.spacing();
      const double s = r2 / (rad * rad);
      return s < 1.0 ? std::exp(-1.0 / (1.0 - s)) : 0.0;
    }
  }
  return 0.0;
}

// Samples in centered layout, normalized to unit box-rule mass.
inline std::vector<double> sample_profile(const ProfileSpec& spec, const Grid& grid) {
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = profile_value(spec, grid, grid.point(i));
  const double m = integrate(grid, v);
  if (!(m > 0.0)) throw ConfigError("profile has no mass on the grid (width too small?)");
  for (double& x : v) x /= m;
  return v;
}

inline DensityField make_initial(const Grid& grid, const ProfileSpec& spec) {
  return DensityField(grid, sample_profile(spec, grid), 0.0);
}

}  // namespace polylab
