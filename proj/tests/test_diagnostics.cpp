#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "polylab/core/profiles.hpp"
#include "polylab/diagnostics/diagnostics.hpp"

using namespace polylab;

namespace {

// lam G_1(lam x) sampled on [-L, L).
DensityField scaled_gaussian(double lam, double L = 20.0, int N = 1024) {
  const Grid g(1, L, N);
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = lam * heat_kernel(1.0, lam * g.point(i)[0]);
  return DensityField(g, v);
}

// Composite Gauss-Legendre on [a, b] with many panels; independent of the box rule.
template <class F>
double quad(F f, double a, double b, int panels = 400) {
  const auto r = gauss_legendre(10, 0.0, 1.0);
  const double h = (b - a) / panels;
  double s = 0.0;
  for (int k = 0; k < panels; ++k)
    for (std::size_t i = 0; i < r.nodes.size(); ++i) s += h * r.weights[i] * f(a + h * (k + r.nodes[i]));
  return s;
}

}  // namespace

TEST(Med, GaussianMatchesQuadratureOracle) {
  const auto g = scaled_gaussian(1.0);
  const MED m = med(g);
  const double pi = std::numbers::pi;
  const double E = quad([&](double x) { return std::exp(-x * x) / (2 * pi); }, -20, 20);
  const double D = quad([&](double x) { return x * x * std::exp(-x * x) / (2 * pi); }, -20, 20);
  EXPECT_NEAR(m.M, 0.39894228, 1e-8);
  EXPECT_NEAR(m.E, E, 1e-12);
  EXPECT_NEAR(m.D, D, 1e-12);
  EXPECT_NEAR(E, 0.28209479, 1e-8);
  EXPECT_NEAR(D, 0.14104740, 1e-8);
}

TEST(Med, PlateauHasMaxAndEnergyNearHeight) {
  const Grid g(1, 20.0, 4096);
  for (double lam : {0.5, 1.0, 2.0}) {
    const auto q = make_initial(g, {ProfileKind::plateau, 1.0 / lam});
    const MED m = med(q);
    EXPECT_NEAR(m.M / lam, 1.0, 0.02);
    // indicator convolved with a Gaussian of sd w/20: int g^2 = lam (1 - 1/(10 sqrt pi))
    EXPECT_NEAR(m.E / lam, 1.0 - 0.1 / std::sqrt(std::numbers::pi), 1e-6);
  }
}

TEST(Med, EnergyBelowMaxForRandomDensities) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const Grid g(1, 30.0, 1024);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(g.size(), 0.0);
    const int bumps = 1 + static_cast<int>(U(rng) * 5);
    for (int b = 0; b < bumps; ++b) {
      const double c = -10 + 20 * U(rng), s = 0.2 + 3 * U(rng), w = U(rng);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += w * heat_kernel(s * s, g.point(i)[0] - c);
    }
    DensityField f(g, v);
    f.normalize();
    const MED m = med(f);
    EXPECT_TRUE(check_energy_bound(m).pass);
    // dissipation with C1 = 81 on the same battery
    EXPECT_TRUE(check_dissipation(m).pass) << "trial " << trial;
  }
}

TEST(Med, SpectralAndFiniteDifferenceGradientsAgree) {
  double prev = INFINITY;
  for (int N : {256, 512, 1024}) {
    const auto g = scaled_gaussian(1.0, 20.0, N);
    const double err = std::abs(med(g).D - dirichlet_fd(g));
    EXPECT_LT(err, prev / 3.5);  // second order in dx
    prev = err;
  }
}

TEST(Moment, GaussianMoments) {
  EXPECT_NEAR(moment(scaled_gaussian(1.0), 2.0), 1.0, 1e-10);
  EXPECT_NEAR(moment(scaled_gaussian(1.0), 4.0), 3.0, 1e-8);
  for (double t : {0.25, 4.0}) EXPECT_NEAR(moment(scaled_gaussian(1.0 / std::sqrt(t), 40.0, 2048), 2.0), t, 1e-10);
  // |x| has a kink at the origin: only O(dx^2)
  EXPECT_NEAR(moment(scaled_gaussian(1.0), 1.0), std::sqrt(2.0 / std::numbers::pi), 2e-4);
}

TEST(Moment, LeakageMarksUntrusted) {
  const auto wide = scaled_gaussian(0.2, 20.0, 512);
  EXPECT_FALSE(checked_moment(wide, 2.0).trusted);
  EXPECT_TRUE(checked_moment(scaled_gaussian(1.0), 2.0).trusted);
}

TEST(Dissipation, GaussianValues) {
  const auto r = check_dissipation(scaled_gaussian(1.0));
  EXPECT_NEAR(r.lhs, 0.11685, 1e-5);
  EXPECT_NEAR(r.rhs, 0.002217, 1e-6);
  EXPECT_TRUE(r.pass);
  EXPECT_TRUE(r.applicable);
}

TEST(Dissipation, ScalingSweepAgainstOracle) {
  const double pi = std::numbers::pi;
  for (double lam : {0.1, 1.0, 10.0}) {
    const double L = std::max(20.0, 20.0 / lam), N = 2048;
    const auto g = scaled_gaussian(lam, L, static_cast<int>(N));
    const MED m = med(g);
    // lam G_1(lam .): M = lam/sqrt(2 pi), E = lam/(2 sqrt pi), D = lam^3/(4 sqrt pi)
    EXPECT_NEAR(m.M, lam / std::sqrt(2 * pi), 1e-9 * lam);
    EXPECT_NEAR(m.E, lam / (2 * std::sqrt(pi)), 1e-9 * lam);
    EXPECT_NEAR(m.D, std::pow(lam, 3) / (4 * std::sqrt(pi)), 1e-9 * std::pow(lam, 3));
    const auto r = check_dissipation(m);
    EXPECT_TRUE(r.pass);
    // both sides are linear in lam
    EXPECT_NEAR(r.lhs / lam, 0.11685, 1e-5);
    EXPECT_NEAR(r.rhs / lam, 0.002217, 1e-6);
  }
}

TEST(Dissipation, SharpPlateauPassesWithSmallMargin) {
  const Grid g(1, 20.0, 8192);
  const auto q = make_initial(g, {ProfileKind::plateau, 1.0});
  const auto r = check_dissipation(q);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.margin, 0.1 * r.lhs + 0.05);
}

TEST(Dissipation, ConstantFieldInapplicable) {
  const Grid g(1, 5.0, 64);
  DensityField f(g, std::vector<double>(g.size(), 0.1));
  const auto r = check_dissipation(f);
  EXPECT_FALSE(r.applicable);
}

TEST(Report, PassIffMarginAboveTolerance) {
  EXPECT_TRUE(make_report("x", 0, 1.0, 1.0 + 1e-13, 1e-12).pass);
  EXPECT_FALSE(make_report("x", 0, 1.0, 1.0 + 1e-11, 1e-12).pass);
  const auto t = inequality_table({make_report("a", 2.0, 3.0, 1.0, 0.0)});
  EXPECT_EQ(t.str(), "name,t,lhs,rhs,margin,pass\na,2,3,1,2,1\n");
}

TEST(Report, MaxDecayConstant) {
  EXPECT_NEAR(kMaxDecayC0, 8.6535, 1e-4);
  EXPECT_TRUE(check_max_decay(1000.0, 0.08).pass);
  EXPECT_FALSE(check_max_decay(1000.0, 0.09).pass);
}

TEST(FitExponent, ExactPowerLaw) {
  std::vector<double> t, y;
  for (int i = 0; i < 30; ++i) {
    t.push_back(std::pow(10.0, 0.1 * i));
    y.push_back(2.5 * std::pow(t.back(), 4.0 / 3.0));
  }
  const auto f = fit_exponent(t, y, 1.0, 1e3);
  EXPECT_NEAR(f.slope, 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(std::exp(f.intercept), 2.5, 1e-10);
  EXPECT_EQ(f.used, 30u);
}

TEST(FitExponent, ConstantAndOscillating) {
  std::vector<double> t, c, y;
  for (int i = 0; i <= 60; ++i) {
    t.push_back(std::pow(10.0, 0.05 * i));
    c.push_back(7.0);
    y.push_back(std::pow(t.back(), 2.0 / 3.0) * (1.0 + 0.01 * std::sin(std::log(t.back()))));
  }
  EXPECT_NEAR(fit_exponent(t, c, 1.0, 1e3).slope, 0.0, 1e-12);
  EXPECT_NEAR(fit_exponent(t, y, 1.0, 1e3).slope, 2.0 / 3.0, 0.01);
}

TEST(FitExponent, ExcludesNonpositiveAndNeedsTenRows) {
  std::vector<double> t, y;
  for (int i = 1; i <= 12; ++i) {
    t.push_back(i);
    y.push_back(i == 5 ? 0.0 : i * i);
  }
  const auto f = fit_exponent(t, y, 1, 12);
  EXPECT_EQ(f.excluded.size(), 1u);
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_THROW(fit_exponent(t, y, 1, 9), DomainError);
}

TEST(Minimizer, ClosedFormValues) {
  EXPECT_NEAR(minimizer_lower_bound(0.5, 2.0, 1), 1.0 / 6.0, 1e-15);
  // the uniform density on [-1, 1] gives int x^2 / 2 = 1/3
  EXPECT_NEAR(minimizer_value(0.5, 2.0, 1), 1.0 / 3.0, 1e-13);
  for (double p : {1.0, 2.0, 3.5})
    for (double lam : {0.1, 1.0, 4.0})
      EXPECT_NEAR(minimizer_lower_bound(lam, p, 1), 0.5 * minimizer_value(lam, p, 1), 1e-12 * minimizer_value(lam, p, 1));
}

TEST(Minimizer, RadialMatchesBallIntegral) {
  // lam int_{B_r} |x|^p = lam d w_d r^{d+p} / (d+p), r = (lam w_d)^{-1/d}
  for (int d : {1, 2, 3})
    for (double p : {1.0, 2.0, 4.0}) {
      const double lam = 0.3, wd = unit_ball_volume(d);
      const double r = std::pow(lam * wd, -1.0 / d);
      EXPECT_NEAR(minimizer_value(lam, p, d), lam * d * wd * std::pow(r, d + p) / (d + p), 1e-12);
      EXPECT_LE(minimizer_lower_bound(lam, p, d), minimizer_value(lam, p, d) * (1 + 1e-15));
    }
}

TEST(Minimizer, UniformDensityAchievesTheMinimum) {
  const Grid g(1, 8.0, 4096);  // x = +-1 are grid points
  const double lam = 0.5;
  std::vector<double> v(g.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = g.point(i)[0];
    if (std::abs(x) < 1.0 - 1e-9) v[i] = lam;
    else if (std::abs(std::abs(x) - 1.0) < 1e-9) v[i] = 0.5 * lam;
  }
  DensityField u(g, v);
  EXPECT_NEAR(u.mass(), 1.0, 1e-12);
  EXPECT_NEAR(moment(u, 2.0), minimizer_value(lam, 2.0, 1), g.spacing() * g.spacing());  // trapezoid error
}

TEST(Minimizer, GreedyFillOracle) {
  // Fill the cells with smallest |x|^p up to height lam until the mass is one.
  const Grid g(1, 10.0, 4096);
  const double dx = g.spacing();
  for (double p : {1.0, 2.0, 3.0})
    for (double lam : {0.25, 1.0}) {
      std::vector<std::size_t> order(g.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        return std::abs(g.point(a)[0]) < std::abs(g.point(b)[0]);
      });
      double mass = 0.0, val = 0.0;
      for (auto i : order) {
        const double take = std::min(lam * dx, 1.0 - mass);
        if (take <= 0) break;
        mass += take;
        val += take * std::pow(std::abs(g.point(i)[0]), p);
      }
      const double exact = minimizer_value(lam, p, 1);
      EXPECT_NEAR(val, exact, 2.0 * dx * p * std::pow(lam, 1.0 - p) + 1e-12) << p << " " << lam;
    }
}

TEST(Minimizer, GaussianRespectsBound) {
  for (double p : {1.0, 2.0, 4.0}) EXPECT_TRUE(check_minimizer(scaled_gaussian(1.0), p).pass);
}

TEST(Diagnostics, PureFunctionsAreBitwiseRepeatable) {
  const auto g = scaled_gaussian(1.3);
  const MED a = med(g), b = med(g);
  EXPECT_EQ(a.M, b.M);
  EXPECT_EQ(a.E, b.E);
  EXPECT_EQ(a.D, b.D);
  EXPECT_EQ(moment(g, 3.0), moment(g, 3.0));
}
