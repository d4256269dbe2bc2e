#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "polylab/hierarchy/error_form.hpp"
#include "polylab/hierarchy/hierarchy.hpp"
#include "polylab/hierarchy/msd.hpp"
#include "polylab/hierarchy/wasserstein.hpp"
#include "polylab/rd/solver.hpp"

using namespace polylab;

namespace {

// A lumpy positive density, normalized.
std::vector<double> synthetic_density(const Grid& g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> q(g.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = 0.2 + U(rng) * std::exp(-0.1 * squared_norm(g.point(i)));
  double m = 0.0;
  for (double v : q) m += v;
  for (double& v : q) v /= m * g.cell_volume();
  return q;
}

CovarianceKernel bump(const Grid& g, double w) { return make_kernel({ProfileKind::smooth, w}, g); }

SheConfig dirac_config(int N = 64, double L = 8.0) {
  SheConfig c;
  c.grid = Grid(1, L, N);
  c.kernel = make_dirac_kernel(c.grid);
  c.q0 = {ProfileKind::gaussian, 1.0};
  c.rng = RngPlan{11};
  return c;
}

// Brute-force sum over all grid tuples of f(x_1)..f(x_n) * kernel(x_1..x_m) * q(x_1)..q(x_m).
double brute_n1_k1(const std::vector<double>& f, const std::vector<double>& q, const CovarianceKernel& k) {
  const double dv = k.grid.cell_volume();
  double s = 0.0;
  for (std::size_t x = 0; x < q.size(); ++x)
    for (std::size_t y = 0; y < q.size(); ++y) s -= f[x] * k.R_between(x, y) * q[x] * q[y];
  return s * dv * dv;
}

double brute_n1_k2(const std::vector<double>& f, const std::vector<double>& q, const CovarianceKernel& k) {
  const double dv = k.grid.cell_volume();
  double s = 0.0;
  for (std::size_t x = 0; x < q.size(); ++x)
    for (std::size_t y = 0; y < q.size(); ++y)
      for (std::size_t z = 0; z < q.size(); ++z) s += f[x] * k.R_between(y, z) * q[x] * q[y] * q[z];
  return s * dv * dv * dv;
}

}  // namespace

TEST(Pairings, BruteForceN1SmoothAndDirac) {
  for (int dirac = 0; dirac < 2; ++dirac) {
    const Grid g(1, 8.0, 32);
    const auto k = dirac ? make_dirac_kernel(g) : bump(g, 2.0);
    const auto q = synthetic_density(g, 5);
    const auto f = TestFunction::gaussian(1.5, {0.7, 0, 0});
    const auto fs = f.sample(g);
    const auto p = compute_pairings(f, fs, q, k);
    EXPECT_NEAR(f_kR_value(1, 1, p), brute_n1_k1(fs, q, k), 1e-13);
    EXPECT_NEAR(f_kR_value(1, 2, p), brute_n1_k2(fs, q, k), 1e-13);
    EXPECT_EQ(f_kR_value(1, 0, p), 0.0);
  }
}

TEST(Pairings, BruteForceN2Tensor) {
  const Grid g(1, 8.0, 16);
  const auto k = bump(g, 2.0);
  const auto q = synthetic_density(g, 9);
  const auto f = TestFunction::square();
  const auto fs = f.sample(g);
  const auto p = compute_pairings(f, fs, q, k);
  const std::size_t n = q.size();
  const double dv = g.cell_volume();
  double k0 = 0, k1 = 0, k2 = 0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      const double ff = fs[a] * fs[b] * q[a] * q[b];
      k0 += ff * k.R_between(a, b);
      for (std::size_t c = 0; c < n; ++c) {
        k1 += -2.0 * ff * (k.R_between(a, c) + k.R_between(b, c)) * q[c];
        for (std::size_t d = 0; d < n; ++d) k2 += 3.0 * ff * k.R_between(c, d) * q[c] * q[d];
      }
    }
  EXPECT_NEAR(f_kR_value(2, 0, p), k0 * dv * dv, 1e-12);
  EXPECT_NEAR(f_kR_value(2, 1, p), k1 * dv * dv * dv, 1e-12);
  EXPECT_NEAR(f_kR_value(2, 2, p), k2 * dv * dv * dv * dv, 1e-11);
}

TEST(Pairings, PrefactorRatioForConstant) {
  const Grid g(1, 8.0, 64);
  const auto k = bump(g, 1.0);
  const auto q = synthetic_density(g, 2);
  const auto f = TestFunction::constant();
  const auto p = compute_pairings(f, f.sample(g), q, k);
  // k1 : k2 = -n^2 : n(n+1)/2 once the sums over indices collapse
  EXPECT_DOUBLE_EQ(f_kR_value(1, 1, p) / f_kR_value(1, 2, p), -1.0);
  EXPECT_DOUBLE_EQ(f_kR_value(2, 1, p) / f_kR_value(2, 2, p), -4.0 / 3.0);
  EXPECT_LT(f_kR_value(1, 1, p), 0.0);
  EXPECT_EQ(f_kR_value(1, 1, p) + f_kR_value(1, 2, p), 0.0);
}

TEST(Pairings, SymmetricUnderPermutation) {
  // the kernel is symmetric bitwise and products are formed in sorted index order
  const Grid g(1, 8.0, 32);
  const auto k = bump(g, 2.0);
  const auto q = synthetic_density(g, 4);
  for (std::size_t x = 0; x < q.size(); ++x)
    for (std::size_t y = 0; y < q.size(); ++y) {
      ASSERT_EQ(k.R_between(x, y), k.R_between(y, x));
      ASSERT_EQ(k.R_between(x, y) * ordered_product(q, {x, y}), k.R_between(y, x) * ordered_product(q, {y, x}));
    }
}

TEST(Tau, IntegratesToZero) {
  for (int dirac = 0; dirac < 2; ++dirac) {
    const Grid g(1, 8.0, 128);
    const auto k = dirac ? make_dirac_kernel(g) : bump(g, 1.0);
    const auto q = synthetic_density(g, 3);
    double s = 0.0;
    for (double v : tau_operator(q, k)) s += v;
    EXPECT_NEAR(s * g.cell_volume(), 0.0, 1e-14);
  }
}

TEST(Tau, TripleSumForm) {
  // <f, T q> = sum (f(x) - f(y)) R(y - z) q(x) q(y) q(z)
  const Grid g(1, 8.0, 16);
  const auto k = bump(g, 2.0);
  const auto q = synthetic_density(g, 8);
  const auto f = TestFunction::gaussian(1.0).sample(g);
  const auto t = tau_operator(q, k);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) lhs += f[i] * t[i];
  for (std::size_t x = 0; x < q.size(); ++x)
    for (std::size_t y = 0; y < q.size(); ++y)
      for (std::size_t z = 0; z < q.size(); ++z) rhs += (f[x] - f[y]) * k.R_between(y, z) * q[x] * q[y] * q[z];
  const double dv = g.cell_volume();
  EXPECT_NEAR(lhs * dv, rhs * dv * dv * dv, 1e-13);
}

TEST(Tau, SquareReducesToDifferenceOfSquares) {
  // for f_eps = eps^2 |x|^2 + const the constant drops: <f_eps, T q> = eps^2 <|x|^2, T q>
  const Grid g(1, 10.0, 128);
  const auto k = bump(g, 1.0);
  const auto q = synthetic_density(g, 1);
  const auto tq = tau_operator(q, k);
  const double eps = 0.5;
  const auto fe = sample_backward_heat(TestFunction::square(), eps, 1.3, g);
  const auto x2 = TestFunction::square().sample(g);
  double a = 0, b = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    a += fe[i] * tq[i];
    b += x2[i] * tq[i];
  }
  EXPECT_NEAR(a, eps * eps * b, 1e-12 * std::abs(b) + 1e-14);
}

TEST(Generator, RhsForGaussianDirac) {
  const auto c = dirac_config(2048, 20.0);
  const auto q0 = make_initial(c.grid, c.q0);
  const auto f = TestFunction::square();
  EXPECT_NEAR(generator_rhs(f, q0, 0.0, c.kernel), 1.0, 1e-10);
  // <x^2, T G_1> = int G_1^2 - int x^2 G_1^2 = 1/(2 sqrt pi) - 1/(4 sqrt pi)
  const double tau = 0.25 / std::sqrt(std::numbers::pi);
  EXPECT_NEAR(generator_rhs(f, q0, 0.5, c.kernel), 1.0 + 0.25 * tau, 1e-10);
  EXPECT_NEAR(tau, 0.14105, 1e-5);
}

TEST(Generator, MatchesReactionDiffusionFunctional) {
  const Grid g(1, 12.0, 256);
  const auto k = make_dirac_kernel(g);
  const DensityField q0(g, synthetic_density(g, 6));
  const auto f = TestFunction::gaussian(2.0, {0.5, 0, 0});
  const double beta = 0.7;
  const auto lap = f.sample_half_laplacian(g);
  const auto fs = f.sample(g);
  const auto nl = nonlocal_field(k, q0.values, beta);
  double s = 0.0;
  for (std::size_t i = 0; i < fs.size(); ++i) s += lap[i] * q0.values[i] + fs[i] * nl[i];
  EXPECT_NEAR(generator_rhs(f, q0, beta, k), s * g.cell_volume(), 1e-12);
}

TEST(Generator, ZeroBetaIsDeterministic) {
  auto c = dirac_config();
  c.beta = 0.0;
  c.realizations = 20;
  c.min_valid = 2;
  c.dt = 1e-4;
  const auto tab = generator_check(TestFunction::square(), c, {0.02, 0.01, 0.005});
  ASSERT_EQ(tab.rows.size(), 3u);
  EXPECT_GT(tab.rows.front().T, tab.rows.back().T);
  for (const auto& r : tab.rows) EXPECT_LE(std::abs(r.slope.mean - tab.heat_part), 1e-8);
  EXPECT_TRUE(tab.pass());
  EXPECT_EQ(tab.table().rows(), 3u);
}

TEST(Generator, ThreadCountInvariant) {
  // realizations share the per-segment heat operators and kernel transforms
  for (bool smooth : {false, true}) {
    auto c = dirac_config();
    if (smooth) c.kernel = bump(c.grid, 1.0);
    c.beta = 0.5;
    c.realizations = 12;
    c.min_valid = 2;
    c.dt = 1e-3;
    c.threads = 1;
    const auto a = generator_check(TestFunction::square(), c, {0.02, 0.01});
    c.threads = 4;
    const auto b = generator_check(TestFunction::square(), c, {0.02, 0.01});
    EXPECT_EQ(a.table().str(), b.table().str()) << (smooth ? "bump" : "dirac");
  }
}

TEST(BackwardHeat, ClosedFormsAgainstQuadrature) {
  const auto rule = gauss_legendre(40, 0.0, 1.0);
  auto quad = [&](const TestFunction& h, double eps, double t, double x) {
    const double s = 1.0 / (eps * eps) - t, sd = std::sqrt(s);
    // panel edges include the ramp kinks eps z - b = +-a
    std::vector<double> edges;
    for (int p = 0; p <= 200; ++p) edges.push_back(x - 12 * sd + 24 * sd * p / 200.0);
    if (h.kind == TestKind::ramp)
      for (double k : {(h.offset - h.cap) / eps, (h.offset + h.cap) / eps}) edges.push_back(k);
    std::sort(edges.begin(), edges.end());
    double acc = 0.0;
    for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
      const double w = edges[p + 1] - edges[p];
      for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double z = edges[p] + w * rule.nodes[i];
        acc += w * rule.weights[i] * h(Point{eps * z, 0, 0}) * heat_kernel(s, x - z);
      }
    }
    return acc;
  };
  const std::vector<TestFunction> hs = {TestFunction::square(), TestFunction::gaussian(0.8, {0.3, 0, 0}),
                                        TestFunction::ramp({1, 0, 0}, 0.2, 0.7), TestFunction::constant(2.5)};
  for (const auto& h : hs)
    for (double t : {0.0, 1.0, 3.5})
      for (double x : {-2.0, 0.0, 1.7})
        EXPECT_NEAR(backward_heat_f(h, 0.5, t, {x, 0, 0}, 1), quad(h, 0.5, t, x), 1e-9) << h.tag() << " " << t << " " << x;
}

TEST(BackwardHeat, SquareClosedFormAndTerminal) {
  const auto h = TestFunction::square();
  const double eps = 0.5;
  for (int d : {1, 3}) {
    const Point x{0.3, -1.1, 2.0};
    double r2 = 0;
    for (int a = 0; a < d; ++a) r2 += x[a] * x[a];
    EXPECT_NEAR(backward_heat_f(h, eps, 1.0, x, d), eps * eps * r2 + (1 - eps * eps) * d, 1e-14);
  }
  const auto g = TestFunction::gaussian(0.7);
  EXPECT_NEAR(backward_heat_f(g, eps, 4.0, {1.2, 0, 0}, 1), g(Point{0.6, 0, 0}), 1e-14);
  EXPECT_THROW(backward_heat_f(h, eps, 4.5, {0, 0, 0}, 1), DomainError);
}

TEST(BackwardHeat, SolvesTheBackwardEquation) {
  const auto h = TestFunction::gaussian(0.9, {0.2, 0, 0});
  const double eps = 0.5, t = 1.5, x = 0.4, dt = 1e-4, dx = 1e-3;
  auto f = [&](double tt, double xx) { return backward_heat_f(h, eps, tt, {xx, 0, 0}, 1); };
  const double ft = (f(t + dt, x) - f(t - dt, x)) / (2 * dt);
  const double fxx = (f(t, x + dx) - 2 * f(t, x) + f(t, x - dx)) / (dx * dx);
  EXPECT_NEAR(ft + 0.5 * fxx, 0.0, 1e-6);
}

TEST(BackwardHeat, RampIsEpsLipschitz) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> N01;
  const double eps = 0.25;
  for (int trial = 0; trial < 200; ++trial) {
    const auto h = TestFunction::ramp({N01(rng), N01(rng), N01(rng)}, N01(rng), 0.5 + std::abs(N01(rng)));
    const Point x{3 * N01(rng), 3 * N01(rng), 3 * N01(rng)}, y{3 * N01(rng), 3 * N01(rng), 3 * N01(rng)};
    const double t = 16.0 * std::abs(std::sin(trial));
    const Point dxy{x[0] - y[0], x[1] - y[1], x[2] - y[2]};
    EXPECT_LE(std::abs(backward_heat_f(h, eps, t, x, 3) - backward_heat_f(h, eps, t, y, 3)),
              eps * std::sqrt(squared_norm(dxy)) * (1 + 1e-12));
  }
}

TEST(WeakForm, ConstantLedgerIsExactlyZero) {
  auto c = dirac_config();
  c.beta = 0.5;
  c.realizations = 30;
  c.min_valid = 2;
  c.dt = 1e-3;
  const auto L = weak_residual(1, TestFunction::constant(), 0.2, c, 16);
  EXPECT_EQ(L.residual_paired.mean, 0.0);
  EXPECT_EQ(L.residual_paired.stderr, 0.0);
  EXPECT_EQ(L.residual.mean, 0.0);
  const auto L2 = weak_residual(2, TestFunction::constant(), 0.2, c, 16);
  EXPECT_EQ(L2.residual_paired.mean, 0.0);
}

TEST(WeakForm, GaussianResidualWithinNoise) {
  auto c = dirac_config();
  c.beta = 0.5;
  c.realizations = 400;
  c.dt = 1e-3;
  const auto L = weak_residual(1, TestFunction::gaussian(1.0), 0.5, c, 16);
  EXPECT_TRUE(L.pass()) << L.residual.mean << " +- " << L.residual.stderr;
  EXPECT_EQ(L.discards, 0u);
  EXPECT_EQ(L.table().rows(), 8u);
}

TEST(WeakForm, RejectsBadArguments) {
  auto c = dirac_config();
  EXPECT_THROW(weak_residual(3, TestFunction::square(), 1.0, c), ConfigError);
  EXPECT_THROW(weak_residual(1, TestFunction::square(), 1.0, c, 8), ConfigError);
}

TEST(ErrorForm, ZeroBetaBothSidesAgree) {
  SheConfig c;
  c.grid = Grid(1, 12.0, 128);
  c.kernel = bump(c.grid, 1.0);
  c.beta = 0.0;
  c.q0 = {ProfileKind::delta, 1.0};
  c.realizations = 4;
  c.min_valid = 2;
  const auto r = error_form(TestFunction::square(), 0.5, c, 16);
  EXPECT_NEAR(r.lhs.mean, r.rhs.mean, 1e-12);
  EXPECT_EQ(r.nonlinear_term.mean, 0.0);
  EXPECT_TRUE(r.pass());
}

TEST(ErrorForm, DiracExcluded) {
  auto c = dirac_config();
  EXPECT_THROW(error_form(TestFunction::square(), 0.5, c), ConfigError);
}

TEST(ErrorForm, SmallEnsembleConsistent) {
  SheConfig c;
  c.grid = Grid(1, 12.0, 128);
  c.kernel = bump(c.grid, 1.0);
  c.beta = 0.3;
  c.q0 = {ProfileKind::delta, 1.0};
  c.realizations = 300;
  const auto r = error_form(TestFunction::square(), 0.5, c, 16);
  EXPECT_TRUE(r.pass()) << r.lhs.mean << " vs " << r.rhs.mean;
  EXPECT_GT(r.nonlinear_term.mean, 0.0);
  EXPECT_NEAR(r.lattice_term.mean, 0.0, 1e-6);
}

TEST(Wasserstein, SamplesAgreeWithCdfFormula) {
  // stratified quantile samples of a lattice distribution vs normal quantiles
  const Grid g(1, 6.0, 64);
  std::vector<double> s, p;
  double tot = 0.0;
  for (int j = 0; j < g.points(); ++j) {
    s.push_back(g.coord(j));
    p.push_back(std::exp(-std::abs(g.coord(j) - 0.3)));
    tot += p.back();
  }
  for (double& v : p) v /= tot;
  const std::size_t M = 200000;
  std::vector<double> a(M), b(M);
  std::size_t j = 0;
  double F = p[0];
  for (std::size_t i = 0; i < M; ++i) {
    const double u = (i + 0.5) / M;
    while (u > F && j + 1 < p.size()) F += p[++j];
    a[i] = s[j];
    b[i] = normal_quantile(u);
  }
  EXPECT_NEAR(wasserstein1_to_normal(s, p), wasserstein1_samples(a, b), 2e-4);
}

TEST(Wasserstein, KnownValues) {
  EXPECT_NEAR(wasserstein1_to_normal({0.0}, {1.0}), std::sqrt(2.0 / std::numbers::pi), 1e-14);
  EXPECT_NEAR(wasserstein1_samples({0, 1, 2}, {2, 3, 4}), 2.0, 1e-15);
  EXPECT_THROW(wasserstein1_samples({0}, {1, 2}), DomainError);
}

TEST(Msd, RampFamilyIsUnitAndReproducible) {
  const auto a = ramp_family(3, 20, 5), b = ramp_family(3, 20, 5);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_NEAR(squared_norm(a[k].dir), 1.0, 1e-14);
    EXPECT_EQ(a[k].offset, b[k].offset);
    EXPECT_GT(a[k].cap, 0.0);
  }
}

TEST(Msd, ZeroBetaCenteredDeviationVanishes) {
  SheConfig c;
  c.grid = Grid(3, 12.0, 32);
  c.kernel = bump(c.grid, 3.0);
  c.beta = 0.0;
  c.q0 = {ProfileKind::delta, 1.0};
  c.realizations = 2;
  c.min_valid = 2;
  const auto t = msd_trend(c, {0.5, 1.0}, 4, 1);
  for (const auto& r : t.rows) EXPECT_LT(r.centered, 1e-8);
  EXPECT_TRUE(t.nonincreasing());
}

TEST(Msd, ThreadCountDoesNotChangeResults) {
  SheConfig c;
  c.grid = Grid(3, 12.0, 16);
  c.kernel = bump(c.grid, 3.0);
  c.beta = 0.2;
  c.q0 = {ProfileKind::delta, 1.0};
  c.realizations = 12;
  c.min_valid = 2;
  const auto a = msd_trend(c, {1.0, 2.0}, 4, 4);
  c.threads = 3;
  const auto b = msd_trend(c, {1.0, 2.0}, 4, 4);
  EXPECT_EQ(a.table().str(), b.table().str());
}
