#pragma once

#include <cmath>
#include <vector>

#include "polylab/hierarchy/hierarchy.hpp"

namespace polylab {

struct ErrorFormResult {
  double eps = 0.0;
  double T = 0.0;
  McEstimate lhs;              // int h(eps x) Q_1(T, x) dx - int h G_1
  McEstimate rhs;              // initial-data term + lattice term + beta^2 int <f_eps, T q>
  double initial_term = 0.0;   // <f_eps(0), q0> - int h G_1 (zero for a point mass)
  McEstimate lattice_term;     // int <(1/2 Lap_h - 1/2 Lap) f_eps, q>, zero for h = |x|^2
  McEstimate nonlinear_term;   // beta^2 int <f_eps, T q>
  McEstimate paired;           // per-realization lhs - rhs
  std::size_t discards = 0;

  double combined_stderr() const { return std::hypot(lhs.stderr, rhs.stderr); }
  // abs_floor absorbs roundoff when the noise is off and both sides are deterministic
  bool pass(double k = 3.0, double abs_floor = 1e-12) const {
    return std::abs(lhs.mean - rhs.mean) <= k * combined_stderr() + abs_floor;
  }
};

// Terms of the rhs integrand beta^2 (f(x) - f(y)) R(y - z) q(x) q(y) q(z) summed over the grid: it equals
// beta^2 (<f,q><R*q,q> - <f q, R*q>) = beta^2 <f, T q>.
inline ErrorFormResult error_form(const TestFunction& h, double eps, const SheConfig& cfg, int nodes = 20) {
  if (cfg.kernel.is_dirac()) throw ConfigError("error_form needs a smooth covariance (Dirac excluded)");
  const double T = 1.0 / (eps * eps);
  SheConfig c = cfg;
  c.T_final = T;
  const SheEngine eng(c);
  const Grid& g = c.grid;
  const int d = g.dim();
  const double dv = g.cell_volume();
  const double b2 = c.beta * c.beta;
  const auto rule = gauss_legendre(nodes, 0.0, T);
  std::vector<double> obs = rule.nodes;
  obs.push_back(T);
  std::vector<std::vector<double>> fnode, defect;
  for (double t : rule.nodes) {
    fnode.push_back(sample_backward_heat(h, eps, t, g));
    const auto lap_h = lattice_half_laplacian(g, fnode.back());
    // 1/2 Lap f_eps = -d_t f_eps; evaluated by a centered difference in t of the closed form
    const double dt = 1e-4 * T;
    const auto fp = sample_backward_heat(h, eps, std::min(T, t + dt), g);
    const auto fm = sample_backward_heat(h, eps, std::max(0.0, t - dt), g);
    const double span = std::min(T, t + dt) - std::max(0.0, t - dt);
    std::vector<double> dfx(g.size());
    for (std::size_t i = 0; i < dfx.size(); ++i) dfx[i] = lap_h[i] + (fp[i] - fm[i]) / span;
    defect.push_back(std::move(dfx));
  }
  const auto hT = sample_backward_heat(h, eps, T, g);
  const double hG = backward_heat_f(h, 1.0, 0.0, Point{0, 0, 0}, d);
  const auto f0 = sample_backward_heat(h, eps, 0.0, g);
  double init = 0.0;
  for (std::size_t i = 0; i < f0.size(); ++i) init += f0[i] * eng.initial()[i];
  init = init * dv - hG;

  auto fn = std::function<std::vector<double>(std::size_t)>([&](std::size_t idx) {
    std::vector<double> acc(4, 0.0);  // lhs, lattice, nonlinear, paired
    eng.simulate(idx, obs, [&](std::size_t m, double t, const std::vector<double>& u) {
      const DensityField q = endpoint_density(g, u, t);
      if (m + 1 == obs.size()) {
        double s = 0.0;
        for (std::size_t i = 0; i < hT.size(); ++i) s += hT[i] * q.values[i];
        acc[0] = s * dv - hG;
        return;
      }
      const auto tq = tau_operator(q.values, c.kernel);
      double nl = 0.0, lat = 0.0;
      for (std::size_t i = 0; i < tq.size(); ++i) {
        nl += fnode[m][i] * tq[i];
        lat += defect[m][i] * q.values[i];
      }
      acc[1] += rule.weights[m] * lat * dv;
      acc[2] += rule.weights[m] * b2 * nl * dv;
    });
    acc[3] = acc[0] - init - acc[1] - acc[2];
    return acc;
  });
  const auto ens = run_ensemble<std::vector<double>>(c.realizations, c.threads, fn);
  ErrorFormResult r;
  r.eps = eps;
  r.T = T;
  r.discards = ens.discards;
  r.lhs = estimate(column(ens.values, 0), c.min_valid);
  r.initial_term = init;
  r.lattice_term = estimate(column(ens.values, 1), c.min_valid);
  r.nonlinear_term = estimate(column(ens.values, 2), c.min_valid);
  std::vector<double> rhs;
  for (const auto& v : ens.values) rhs.push_back(init + v[1] + v[2]);
  r.rhs = estimate(rhs, c.min_valid);
  r.paired = estimate(column(ens.values, 3), c.min_valid);
  return r;
}

}  // namespace polylab
