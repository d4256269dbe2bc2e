#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "polylab/core/error.hpp"

namespace polylab {

using Point = std::array<double, 3>;

// Periodic box [-L, L)^d sampled at N points per axis, x_j = -L + j*dx.
// The origin sits exactly on index N/2.
class Grid {
 public:
  Grid() = default;
  Grid(int dim, double half_width, int points)
      : dim_(dim), half_width_(half_width), points_(points) {
    if (dim < 1 || dim > 3) throw ConfigError("grid.d must be 1, 2 or 3");
    if (points < 16 || (points & (points - 1)) != 0)
      throw ConfigError("grid.N must be a power of two >= 16, got " + std::to_string(points));
    if (!(half_width > 0.0)) throw ConfigError("grid.L must be positive");
  }

  int dim() const { return dim_; }
  double half_width() const { return half_width_; }
  int points() const { return points_; }
  double spacing() const { return 2.0 * half_width_ / points_; }
  double cell_volume() const { return std::pow(spacing(), dim_); }

  std::size_t size() const {
    std::size_t n = 1;
    for (int a = 0; a < dim_; ++a) n *= static_cast<std::size_t>(points_);
    return n;
  }

  double coord(int j) const { return -half_width_ + j * spacing(); }
  int center_index() const { return points_ / 2; }

  std::vector<double> axis() const {
    std::vector<double> x(static_cast<std::size_t>(points_));
    for (int j = 0; j < points_; ++j) x[static_cast<std::size_t>(j)] = coord(j);
    return x;
  }

  // Row-major multi-index; the last axis varies fastest.
  std::array<int, 3> unflatten(std::size_t flat) const {
    std::array<int, 3> idx{0, 0, 0};
    for (int a = dim_ - 1; a >= 0; --a) {
      idx[static_cast<std::size_t>(a)] = static_cast<int>(flat % static_cast<std::size_t>(points_));
      flat /= static_cast<std::size_t>(points_);
    }
    return idx;
  }

  std::size_t flatten(const std::array<int, 3>& idx) const {
    std::size_t flat = 0;
    for (int a = 0; a < dim_; ++a) {
      const int i = ((idx[static_cast<std::size_t>(a)] % points_) + points_) % points_;
      flat = flat * static_cast<std::size_t>(points_) + static_cast<std::size_t>(i);
    }
    return flat;
  }

  Point point(std::size_t flat) const {
    const auto idx = unflatten(flat);
    Point p{0.0, 0.0, 0.0};
    for (int a = 0; a < dim_; ++a) p[static_cast<std::size_t>(a)] = coord(idx[static_cast<std::size_t>(a)]);
    return p;
  }

  // Index of the grid point nearest to x along one axis.
  int nearest_index(double x) const {
    return std::clamp(static_cast<int>(std::lround((x + half_width_) / spacing())), 0, points_ - 1);
  }

  bool operator==(const Grid& o) const {
    return dim_ == o.dim_ && points_ == o.points_ && half_width_ == o.half_width_;
  }

 private:
  int dim_ = 1;
  double half_width_ = 1.0;
  int points_ = 16;
};

inline double squared_norm(const Point& p) { return p[0] * p[0] + p[1] * p[1] + p[2] * p[2]; }

// Box-rule integral of samples over the grid.
inline double integrate(const Grid& grid, const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) * grid.cell_volume();
}

inline double inner(const Grid& grid, const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0) * grid.cell_volume();
}

// Nonnegative samples of a density on a periodic grid at time t.
struct DensityField {
  Grid grid;
  std::vector<double> values;
  double t = 0.0;

  DensityField() = default;
  DensityField(Grid g, std::vector<double> v, double time = 0.0)
      : grid(g), values(std::move(v)), t(time) {
    if (values.size() != grid.size()) throw ConfigError("field size does not match grid");
  }
  explicit DensityField(Grid g) : grid(g), values(g.size(), 0.0) {}

  double mass() const { return integrate(grid, values); }
  double sup() const { return *std::max_element(values.begin(), values.end()); }
  double min() const { return *std::min_element(values.begin(), values.end()); }

  void normalize() {
    const double m = mass();
    if (!(m > 0.0)) throw InvariantError("cannot normalize a field with nonpositive mass");
    for (double& v : values) v /= m;
  }
};

// Mass carried by cells within one spacing of the periodic boundary.
inline double boundary_mass(const DensityField& f) {
  const Grid& g = f.grid;
  const int n = g.points();
  double s = 0.0;
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    const auto idx = g.unflatten(i);
    for (int a = 0; a < g.dim(); ++a) {
      const int j = idx[static_cast<std::size_t>(a)];
      if (j == 0 || j == n - 1) {
        s += std::abs(f.values[i]);
        break;
      }
    }
  }
  return s * g.cell_volume();
}

inline constexpr double kLeakageLimit = 1e-10;

}  // namespace polylab
