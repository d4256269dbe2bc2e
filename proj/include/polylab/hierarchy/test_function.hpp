#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "polylab/core/error.hpp"
#include "polylab/core/grid.hpp"

namespace polylab {

enum class TestKind { constant, square, gaussian, ramp };

// Test functions on R^d. `ramp` is clamp(<e,x> - b, -a, a), Lipschitz with constant 1.
struct TestFunction {
  TestKind kind = TestKind::gaussian;
  double c = 1.0;          // constant value
  double width = 1.0;      // Gaussian sigma
  Point center{0, 0, 0};   // Gaussian center
  Point dir{1, 0, 0};      // ramp direction (unit)
  double offset = 0.0;     // ramp b
  double cap = 1.0;        // ramp a

  static TestFunction constant(double v = 1.0) {
    TestFunction f;
    f.kind = TestKind::constant;
    f.c = v;
    return f;
  }
  static TestFunction square() {
    TestFunction f;
    f.kind = TestKind::square;
    return f;
  }
  static TestFunction gaussian(double sigma, Point center = {0, 0, 0}) {
    TestFunction f;
    f.kind = TestKind::gaussian;
    f.width = sigma;
    f.center = center;
    return f;
  }
  static TestFunction ramp(Point dir, double offset, double cap) {
    TestFunction f;
    f.kind = TestKind::ramp;
    const double n = std::sqrt(squared_norm(dir));
    if (!(n > 0.0)) throw DomainError("ramp direction must be nonzero");
    for (double& v : dir) v /= n;
    f.dir = dir;
    f.offset = offset;
    f.cap = cap;
    return f;
  }

  std::string tag() const {
    switch (kind) {
      case TestKind::constant: return "constant";
      case TestKind::square: return "square";
      case TestKind::gaussian: return "gaussian";
      case TestKind::ramp: return "ramp";
    }
    return "?";
  }
  bool is_constant() const { return kind == TestKind::constant; }

  double operator()(const Point& x) const {
    switch (kind) {
      case TestKind::constant: return c;
      case TestKind::square: return squared_norm(x);
      case TestKind::gaussian: {
        const Point y{x[0] - center[0], x[1] - center[1], x[2] - center[2]};
        return std::exp(-squared_norm(y) / (2.0 * width * width));
      }
      case TestKind::ramp: {
        const double s = dir[0] * x[0] + dir[1] * x[1] + dir[2] * x[2] - offset;
        return std::clamp(s, -cap, cap);
      }
    }
    return 0.0;
  }

  // (1/2) Lap f; the ramp's value holds away from its two kinks.
  double half_laplacian(const Point& x, int d) const {
    switch (kind) {
      case TestKind::constant: return 0.0;
      case TestKind::square: return static_cast<double>(d);
      case TestKind::gaussian: {
        const Point y{x[0] - center[0], x[1] - center[1], x[2] - center[2]};
        const double s2 = width * width;
        return 0.5 * (*this)(x) * (squared_norm(y) / (s2 * s2) - d / s2);
      }
      case TestKind::ramp: return 0.0;
    }
    return 0.0;
  }

  std::vector<double> sample(const Grid& g) const {
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (*this)(g.point(i));
    return v;
  }
  std::vector<double> sample_half_laplacian(const Grid& g) const {
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = half_laplacian(g.point(i), g.dim());
    return v;
  }
};

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// E clamp(Y, -a, a) for Y ~ N(mu, s^2).
inline double clamped_normal_mean(double mu, double s, double a) {
  if (s == 0.0) return std::clamp(mu, -a, a);
  const double lo = (-a - mu) / s, hi = (a - mu) / s;
  const double mid = mu * (normal_cdf(hi) - normal_cdf(lo)) + s * (normal_pdf(lo) - normal_pdf(hi));
  return -a * normal_cdf(lo) + a * (1.0 - normal_cdf(hi)) + mid;
}

// f_eps(t, x) = int h(eps z) G_{1/eps^2 - t}(x - z) dz, the backward heat flow of h(eps .),
// in closed form for every test-function family.
inline double backward_heat_f(const TestFunction& h, double eps, double t, const Point& x, int d) {
  if (!(eps > 0.0)) throw DomainError("backward_heat_f needs eps > 0");
  const double T = 1.0 / (eps * eps);
  if (t > T * (1.0 + 1e-14) || t < 0.0) throw DomainError("backward_heat_f needs 0 <= t <= 1/eps^2");
  const double s = std::max(0.0, T - t);
  switch (h.kind) {
    case TestKind::constant: return h.c;
    case TestKind::square: {
      double r2 = 0.0;
      for (int a = 0; a < d; ++a) r2 += x[static_cast<std::size_t>(a)] * x[static_cast<std::size_t>(a)];
      return eps * eps * r2 + (1.0 - eps * eps * t) * d;
    }
    case TestKind::gaussian: {
      const double v = h.width * h.width / (eps * eps);
      double r2 = 0.0;
      for (int a = 0; a < d; ++a) {
        const double y = x[static_cast<std::size_t>(a)] - h.center[static_cast<std::size_t>(a)] / eps;
        r2 += y * y;
      }
      return std::pow(v / (v + s), 0.5 * d) * std::exp(-r2 / (2.0 * (v + s)));
    }
    case TestKind::ramp: {
      const double proj = h.dir[0] * x[0] + h.dir[1] * x[1] + h.dir[2] * x[2];
      return clamped_normal_mean(eps * proj - h.offset, eps * std::sqrt(s), h.cap);
    }
  }
  return 0.0;
}

inline std::vector<double> sample_backward_heat(const TestFunction& h, double eps, double t, const Grid& g) {
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = backward_heat_f(h, eps, t, g.point(i), g.dim());
  return v;
}

}  // namespace polylab
