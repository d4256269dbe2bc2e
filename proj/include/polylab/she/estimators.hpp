#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "polylab/core/heat.hpp"
#include "polylab/io/csv.hpp"
#include "polylab/she/sim.hpp"

namespace polylab {

inline std::string coord_label(const Grid& g, std::size_t flat) {
  const Point p = g.point(flat);
  std::string s = fmt17(p[0]);
  for (int a = 1; a < g.dim(); ++a) s += ";" + fmt17(p[static_cast<std::size_t>(a)]);
  return s;
}

// Flat index of the grid point nearest to x.
inline std::size_t nearest_flat(const Grid& g, const Point& x) {
  std::array<int, 3> idx{0, 0, 0};
  for (int a = 0; a < g.dim(); ++a) idx[static_cast<std::size_t>(a)] = g.nearest_index(x[static_cast<std::size_t>(a)]);
  return g.flatten(idx);
}

struct QnResult {
  double T = 0.0;
  int n = 1;
  Grid grid;
  std::vector<std::vector<std::size_t>> points;
  std::vector<McEstimate> estimates;
  std::size_t nreal = 0;
  std::size_t discards = 0;

  bool low_confidence() const {
    for (const auto& e : estimates)
      if (e.low_confidence) return true;
    return false;
  }

  CsvTable table() const {
    std::vector<std::string> cols{"T", "n"};
    for (int j = 1; j <= n; ++j) cols.push_back("x" + std::to_string(j));
    for (const char* c : {"mean", "stderr", "nreal", "discards"}) cols.push_back(c);
    CsvTable t(cols);
    for (std::size_t p = 0; p < points.size(); ++p) {
      std::vector<std::string> row{fmt17(T), std::to_string(n)};
      for (std::size_t idx : points[p]) row.push_back(coord_label(grid, idx));
      row.push_back(fmt17(estimates[p].mean));
      row.push_back(fmt17(estimates[p].stderr));
      row.push_back(std::to_string(nreal));
      row.push_back(std::to_string(discards));
      t.add(std::move(row));
    }
    return t;
  }
};

// Product q(x_1)...q(x_n), factors multiplied in index order so that permuted tuples agree bitwise.
inline double ordered_product(const std::vector<double>& q, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());
  double p = 1.0;
  for (std::size_t i : idx) p *= q[i];
  return p;
}

// Q_n(T, x_{1:n}) = E[q(T,x_1) ... q(T,x_n)] at each tuple of flat grid indices.
inline QnResult estimate_Qn(const SheConfig& cfg, int n, const std::vector<std::vector<std::size_t>>& points, double T) {
  if (n < 1 || n > 3) throw ConfigError("estimate_Qn supports n = 1, 2, 3");
  for (const auto& p : points)
    if (static_cast<int>(p.size()) != n) throw ConfigError("every probe tuple must have n points");
  SheConfig c = cfg;
  c.T_final = T;
  const SheEngine eng(c);
  auto fn = std::function<std::vector<double>(std::size_t)>([&](std::size_t i) {
    const DensityField q = endpoint_density(c.grid, eng.simulate_final(i), T);
    std::vector<double> out;
    for (const auto& p : points) out.push_back(ordered_product(q.values, p));
    return out;
  });
  const auto ens = run_ensemble<std::vector<double>>(c.realizations, c.threads, fn);
  QnResult r;
  r.T = T;
  r.n = n;
  r.grid = c.grid;
  r.points = points;
  r.nreal = ens.values.size();
  r.discards = ens.discards;
  for (std::size_t k = 0; k < points.size(); ++k) r.estimates.push_back(estimate(column(ens.values, k), c.min_valid));
  return r;
}

struct MeanLaw {
  std::vector<std::size_t> probes;
  std::vector<McEstimate> u;  // E[u(T, x_k)]
  McEstimate mass;            // E[int u(T)]
  std::size_t discards = 0;
};

inline MeanLaw she_mean_law(const SheConfig& cfg, const std::vector<std::size_t>& probes) {
  const SheEngine eng(cfg);
  auto fn = std::function<std::vector<double>(std::size_t)>([&](std::size_t i) {
    const auto u = eng.simulate_final(i);
    std::vector<double> out;
    for (std::size_t p : probes) out.push_back(u[p]);
    out.push_back(field_mass(cfg.grid, u));
    return out;
  });
  const auto ens = run_ensemble<std::vector<double>>(cfg.realizations, cfg.threads, fn);
  MeanLaw m;
  m.probes = probes;
  m.discards = ens.discards;
  for (std::size_t k = 0; k < probes.size(); ++k) m.u.push_back(estimate(column(ens.values, k), cfg.min_valid));
  m.mass = estimate(column(ens.values, probes.size()), cfg.min_valid);
  return m;
}

// E[u(T,x) u(T,y)] at pairs of 1-D flat indices.
inline std::vector<McEstimate> second_moment_mc(const SheConfig& cfg,
                                                const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  if (cfg.grid.dim() != 1) throw ConfigError("second_moment_mc is one-dimensional");
  const SheEngine eng(cfg);
  auto fn = std::function<std::vector<double>(std::size_t)>([&](std::size_t i) {
    const auto u = eng.simulate_final(i);
    std::vector<double> out;
    for (auto [a, b] : pairs) out.push_back(ordered_product(u, {a, b}));
    return out;
  });
  const auto ens = run_ensemble<std::vector<double>>(cfg.realizations, cfg.threads, fn);
  std::vector<McEstimate> out;
  for (std::size_t k = 0; k < pairs.size(); ++k) out.push_back(estimate(column(ens.values, k), cfg.min_valid));
  return out;
}

// Deterministic solve of d_t W = 1/2 Lap W + beta^2 R(x - y) W on the 2-D grid, W(0) = q0 x q0:
// Strang splitting with exact spectral heat flow. Values indexed [i * N + j] = W(x_i, y_j).
inline std::vector<double> second_moment_oracle(const SheConfig& cfg, double T, double dt) {
  if (cfg.grid.dim() != 1) throw ConfigError("second_moment_oracle lifts a 1-D configuration");
  const Grid& g1 = cfg.grid;
  const Grid g2(2, g1.half_width(), g1.points());
  const auto q0 = sample_profile(cfg.q0, g1);
  const std::size_t n = static_cast<std::size_t>(g1.points());
  std::vector<double> W(n * n), Rxy(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      W[i * n + j] = q0[i] * q0[j];
      Rxy[i * n + j] = cfg.kernel.R_between(i, j);
    }
  const int m = std::max(1, static_cast<int>(std::ceil(T / dt)));
  const double h = T / m;
  const double b2 = cfg.beta * cfg.beta;
  std::vector<double> half(n * n);
  for (std::size_t k = 0; k < half.size(); ++k) half[k] = std::exp(0.5 * b2 * Rxy[k] * h);
  for (int s = 0; s < m; ++s) {
    for (std::size_t k = 0; k < W.size(); ++k) W[k] *= half[k];
    spectral_heat(g2, W, h);
    for (std::size_t k = 0; k < W.size(); ++k) W[k] *= half[k];
  }
  return W;
}

struct MollificationRow {
  double eps_coarse = 0.0, eps_fine = 0.0;
  McEstimate l2;      // E int (q_coarse - q_fine)^2
  McEstimate probe2;  // E (q_coarse(x) - q_fine(x))^2 at the probe
};

struct MollificationStudy {
  std::vector<double> eps;
  std::vector<MollificationRow> rows;
  McEstimate decrease;  // E[l2_0 - l2_1], paired
  std::vector<double> moment_probes;
  std::vector<McEstimate> q2;   // E q_eps0(T,x)^2 at moment_probes
  std::vector<double> heat_ref;  // (G_T * q0)(x) at moment_probes
  std::size_t discards = 0;

  bool cauchy_pass(double k = 2.0) const { return decrease.mean > k * decrease.stderr; }
};

// Coupled ensembles: one white-noise draw per step drives every width, phi_eps = phi_{eps} of the
// same family. Probe x = 0.
inline MollificationStudy mollification_study(const SheConfig& cfg, double eps0,
                                              const std::vector<double>& moment_probe_x) {
  if (cfg.grid.dim() != 1) throw ConfigError("mollification_study is one-dimensional");
  const std::vector<double> eps{eps0, eps0 / 2, eps0 / 4};
  std::vector<CovarianceKernel> kernels;
  for (double e : eps) kernels.push_back(make_kernel({cfg.kernel.phi_spec.kind, e}, cfg.grid));
  SheConfig base = cfg;
  base.kernel = kernels.front();
  validate(base);
  const auto u0 = sample_profile(cfg.q0, cfg.grid);
  const std::size_t center = static_cast<std::size_t>(cfg.grid.center_index());
  std::vector<std::size_t> probes;
  for (double x : moment_probe_x) probes.push_back(nearest_flat(cfg.grid, {x, 0.0, 0.0}));

  auto fn = std::function<std::vector<double>(std::size_t)>([&](std::size_t idx) {
    NormalStream stream = cfg.rng.stream(idx);
    std::vector<double> white(cfg.grid.size()), dW(cfg.grid.size());
    std::vector<std::vector<double>> u(eps.size(), u0);
    for (const Segment& seg : segment_plan({cfg.T_final}, cfg.step())) {
      LatticeHeat heat(cfg.grid, seg.h);
      const double sd = std::sqrt(seg.h / cfg.grid.cell_volume());
      for (int s = 0; s < seg.count; ++s) {
        stream.fill(white);
        for (double& v : white) v *= sd;
        for (std::size_t l = 0; l < eps.size(); ++l) {
          kernels[l].mollify(white, dW);
          noise_multiply(u[l], dW, cfg.beta, kernels[l].R0, seg.h);
          heat.apply(u[l]);
        }
      }
    }
    std::vector<DensityField> q;
    for (const auto& ul : u) q.push_back(endpoint_density(cfg.grid, ul, cfg.T_final));
    std::vector<double> out;
    for (std::size_t l = 0; l + 1 < eps.size(); ++l) {
      double s = 0.0;
      for (std::size_t i = 0; i < u0.size(); ++i) s += (q[l].values[i] - q[l + 1].values[i]) * (q[l].values[i] - q[l + 1].values[i]);
      out.push_back(s * cfg.grid.spacing());
      const double d = q[l].values[center] - q[l + 1].values[center];
      out.push_back(d * d);
    }
    for (std::size_t p : probes) out.push_back(q[0].values[p] * q[0].values[p]);
    return out;
  });
  const auto ens = run_ensemble<std::vector<double>>(cfg.realizations, cfg.threads, fn);
  MollificationStudy st;
  st.eps = eps;
  st.discards = ens.discards;
  for (std::size_t l = 0; l + 1 < eps.size(); ++l)
    st.rows.push_back({eps[l], eps[l + 1], estimate(column(ens.values, 2 * l), cfg.min_valid),
                       estimate(column(ens.values, 2 * l + 1), cfg.min_valid)});
  std::vector<double> dec;
  for (const auto& r : ens.values) dec.push_back(r[0] - r[2]);
  st.decrease = estimate(dec, cfg.min_valid);
  st.moment_probes = moment_probe_x;
  std::vector<double> ref = u0;
  heat_propagate_inplace(cfg.grid, ref, cfg.T_final);
  for (std::size_t k = 0; k < probes.size(); ++k) {
    st.q2.push_back(estimate(column(ens.values, 4 + k), cfg.min_valid));
    st.heat_ref.push_back(ref[probes[k]]);
  }
  return st;
}

}  // namespace polylab
