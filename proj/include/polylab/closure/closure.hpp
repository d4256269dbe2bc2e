#pragma once

#include <cmath>
#include <vector>

#include "polylab/io/csv.hpp"
#include "polylab/rd/solver.hpp"
#include "polylab/she/estimators.hpp"

namespace polylab {

// The factorized closed equation for Q_1 is the nonlocal reaction-diffusion equation itself.
inline RunResult closure_solve(const RDConfig& cfg, const DensityField& q0) { return run(cfg, q0); }

struct DefectResult {
  double T = 0.0;
  double beta = 0.0;
  double defect = 0.0;  // max over probe pairs of |Q2(x,y) - Q1(x) Q1(y)|
  double scale = 0.0;   // max over probe pairs of Q1(x) Q1(y)
  double stderr = 0.0;  // at the maximizing pair
  std::size_t discards = 0;

  double ratio() const { return scale > 0.0 ? defect / scale : 0.0; }
  bool inconclusive() const { return stderr > defect; }
  CsvTable table() const {
    CsvTable t({"T", "beta", "defect", "scale", "stderr"});
    t.add_numbers({T, beta, defect, scale, stderr});
    return t;
  }
};

// Per realization z = q(x) q(y) - Q1(y) q(x) - Q1(x) q(y) linearizes Q2 - Q1 Q1 around the ensemble means,
// so its sample stderr is the delta-method stderr of the defect.
inline DefectResult factorization_defect(const SheConfig& cfg, double T, const std::vector<std::size_t>& probes) {
  if (cfg.grid.dim() != 1) throw ConfigError("factorization_defect is one-dimensional");
  SheConfig c = cfg;
  c.T_final = T;
  const SheEngine eng(c);
  const std::size_t P = probes.size();
  auto fn = std::function<std::vector<double>(std::size_t)>([&](std::size_t i) {
    const DensityField q = endpoint_density(c.grid, eng.simulate_final(i), T);
    std::vector<double> v(P);
    for (std::size_t k = 0; k < P; ++k) v[k] = q.values[probes[k]];
    return v;
  });
  const auto ens = run_ensemble<std::vector<double>>(c.realizations, c.threads, fn);
  std::vector<double> Q1(P);
  for (std::size_t k = 0; k < P; ++k) Q1[k] = pairwise_sum(column(ens.values, k)) / static_cast<double>(ens.values.size());
  DefectResult r;
  r.T = T;
  r.beta = c.beta;
  r.discards = ens.discards;
  for (std::size_t a = 0; a < P; ++a)
    for (std::size_t b = a; b < P; ++b) {
      std::vector<double> prod, z;
      for (const auto& v : ens.values) {
        prod.push_back(v[a] * v[b]);
        z.push_back(v[a] * v[b] - Q1[b] * v[a] - Q1[a] * v[b]);
      }
      const double q2 = pairwise_sum(prod) / static_cast<double>(prod.size());
      const double dfc = std::abs(q2 - Q1[a] * Q1[b]);
      r.scale = std::max(r.scale, Q1[a] * Q1[b]);
      if (dfc >= r.defect) {
        r.defect = dfc;
        r.stderr = estimate(z, 2).stderr;
      }
    }
  return r;
}

struct ClosureComparison {
  double T = 0.0;
  McEstimate l1;  // ||Q1_closure(T) - Q1_mc(T)||_1, stderr by linearization of the absolute value
  double closure_mass = 0.0;
  std::size_t discards = 0;
};

// Exploratory: the closed equation against the Monte Carlo annealed density on the same grid and kernel.
inline std::vector<ClosureComparison> closure_vs_mc(const SheConfig& cfg, const std::vector<double>& T_list) {
  if (cfg.grid.dim() != 1) throw ConfigError("closure_vs_mc is one-dimensional");
  RDConfig rd;
  rd.beta = cfg.beta;
  rd.kernel = cfg.kernel;
  rd.grid = cfg.grid;
  rd.dt = cfg.step();
  rd.T_final = T_list.back();
  rd.snapshot_times = T_list;
  rd.check_leakage = false;  // both sides live on the same periodic box, wrap-around included
  const auto q0 = make_initial(cfg.grid, cfg.q0);
  const RunResult cl = closure_solve(rd, q0);
  if (cl.aborted) throw InvariantError("closure solve aborted: " + cl.abort_reason);

  SheConfig c = cfg;
  c.T_final = T_list.back();
  const SheEngine eng(c);
  const Grid& g = c.grid;
  const std::size_t V = g.size();
  auto fn = std::function<std::vector<std::vector<double>>(std::size_t)>([&](std::size_t i) {
    std::vector<std::vector<double>> qs;
    eng.simulate(i, T_list, [&](std::size_t, double t, const std::vector<double>& u) {
      qs.push_back(endpoint_density(g, u, t).values);
    });
    return qs;
  });
  const auto ens = run_ensemble<std::vector<std::vector<double>>>(c.realizations, c.threads, fn);
  const double n = static_cast<double>(ens.values.size());
  std::vector<ClosureComparison> out;
  for (std::size_t k = 0; k < T_list.size(); ++k) {
    const DensityField* snap = nullptr;
    for (const auto& s : cl.snapshots)
      if (s.t == T_list[k]) snap = &s;
    if (!snap) throw InvariantError("closure snapshot missing at requested T");
    std::vector<double> Q(V, 0.0);
    for (const auto& r : ens.values)
      for (std::size_t i = 0; i < V; ++i) Q[i] += r[k][i];
    for (double& v : Q) v /= n;
    std::vector<double> sgn(V);
    double l1 = 0.0;
    for (std::size_t i = 0; i < V; ++i) {
      const double diff = snap->values[i] - Q[i];
      sgn[i] = diff > 0 ? 1.0 : diff < 0 ? -1.0 : 0.0;
      l1 += std::abs(diff);
    }
    std::vector<double> z;
    for (const auto& r : ens.values) {
      double s = 0.0;
      for (std::size_t i = 0; i < V; ++i) s += sgn[i] * r[k][i];
      z.push_back(s * g.cell_volume());
    }
    ClosureComparison cc;
    cc.T = T_list[k];
    cc.l1 = estimate(z, 2);
    cc.l1.mean = l1 * g.cell_volume();
    cc.closure_mass = snap->mass();
    cc.discards = ens.discards;
    out.push_back(cc);
  }
  return out;
}

inline CsvTable closure_table(const std::vector<ClosureComparison>& rows) {
  CsvTable t({"T", "l1", "stderr", "closure_mass"});
  for (const auto& r : rows) t.add_numbers({r.T, r.l1.mean, r.l1.stderr, r.closure_mass});
  return t;
}

}  // namespace polylab
