#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "polylab/core/error.hpp"
#include "polylab/hierarchy/test_function.hpp"

namespace polylab {

// W1 between two empirical measures with equally many atoms: mean |a_(i) - b_(i)|.
inline double wasserstein1_samples(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size() || a.empty()) throw DomainError("wasserstein1_samples needs equal, nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline double normal_quantile(double p) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }

// W1 = int |F - Phi| between sum_j p_j delta_{s_j} (s strictly increasing, sum p = 1) and N(0, 1).
// F is piecewise constant, Phi crosses each level at most once, and x Phi(x) + phi(x) is a primitive of Phi.
inline double wasserstein1_to_normal(const std::vector<double>& s, const std::vector<double>& p) {
  if (s.size() != p.size() || s.empty()) throw DomainError("wasserstein1_to_normal: atoms and weights differ");
  auto I = [](double x) { return x * normal_cdf(x) + normal_pdf(x); };
  double w = I(s.front());  // int_{-inf}^{s_0} Phi
  double F = 0.0;
  for (std::size_t j = 0; j + 1 < s.size(); ++j) {
    F += p[j];
    const double a = s[j], b = s[j + 1];
    if (!(b > a)) throw DomainError("wasserstein1_to_normal: atoms must increase");
    double c = F <= 0.0 ? a : F >= 1.0 ? b : std::clamp(normal_quantile(F), a, b);
    w += F * (c - a) - (I(c) - I(a));
    w += (I(b) - I(c)) - F * (b - c);
  }
  w += I(s.back()) - s.back();  // int_{s_last}^{inf} (1 - Phi)
  return w;
}

}  // namespace polylab
