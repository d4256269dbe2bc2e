#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "polylab/core/quadrature.hpp"
#include "polylab/core/rng.hpp"
#include "polylab/hierarchy/test_function.hpp"
#include "polylab/io/csv.hpp"
#include "polylab/she/estimators.hpp"

namespace polylab {

// Per-realization building blocks of the pairings <f_{k,R}, q^{(n+k)}>.
struct Pairings {
  double fq = 0.0;      // <f, q>
  double Rqq = 0.0;     // <R*q, q>
  double fq_Rq = 0.0;   // <f q, R*q>
  double fq_Rfq = 0.0;  // <f q, R*(f q)>
};

// For the constant test function the pairings use <c, q> = c, which holds exactly for a
// normalized density; the terms of the f = c ledger then cancel bit for bit.
inline Pairings compute_pairings(const TestFunction& f, const std::vector<double>& fs, const std::vector<double>& q,
                                 const CovarianceKernel& k) {
  const double dv = k.grid.cell_volume();
  const auto rq = k.convolve(q);
  Pairings p;
  for (std::size_t i = 0; i < q.size(); ++i) p.Rqq += rq[i] * q[i];
  p.Rqq *= dv;
  if (f.is_constant()) {
    p.fq = f.c;
    p.fq_Rq = f.c * p.Rqq;
    p.fq_Rfq = f.c * f.c * p.Rqq;
    return p;
  }
  std::vector<double> fq(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    fq[i] = fs[i] * q[i];
    p.fq += fq[i];
    p.fq_Rq += fq[i] * rq[i];
  }
  p.fq *= dv;
  p.fq_Rq *= dv;
  const auto rfq = k.convolve(fq);
  for (std::size_t i = 0; i < q.size(); ++i) p.fq_Rfq += fq[i] * rfq[i];
  p.fq_Rfq *= dv;
  return p;
}

// <f_{k,R}, q^{(n+k)}> for the tensor test function f(x_1)...f(x_n):
//   f_{0,R} = f sum_{i<j} R(x_i - x_j), f_{1,R} = -n f sum_i R(x_i - x_{n+1}),
//   f_{2,R} = n(n+1)/2 f R(x_{n+1} - x_{n+2}).
inline double f_kR_value(int n, int k, const Pairings& p) {
  if (n == 1) {
    if (k == 0) return 0.0;
    if (k == 1) return -p.fq_Rq;
    if (k == 2) return p.fq * p.Rqq;
  } else if (n == 2) {
    if (k == 0) return p.fq_Rfq;
    if (k == 1) return -4.0 * p.fq * p.fq_Rq;
    if (k == 2) return 3.0 * p.fq * p.fq * p.Rqq;
  }
  throw ConfigError("f_kR pairings are available for n in {1, 2}, k in {0, 1, 2}");
}

inline void check_kernel(const CovarianceKernel& k, const Grid& g) {
  if (!(k.grid == g)) throw ConfigError("kernel grid does not match the density grid");
}

inline McEstimate f_kR_pairing(const TestFunction& f, int k, int n, const std::vector<DensityField>& q_fields,
                               const CovarianceKernel& kernel) {
  std::vector<double> vals;
  if (q_fields.empty()) return {};
  const auto fs = f.sample(q_fields.front().grid);
  for (const auto& q : q_fields) {
    check_kernel(kernel, q.grid);
    vals.push_back(f_kR_value(n, k, compute_pairings(f, fs, q.values, kernel)));
  }
  return estimate(vals);
}

// T q = <R*q, q> q - q R*q.
inline std::vector<double> tau_operator(const std::vector<double>& q, const CovarianceKernel& k) {
  const auto rq = k.convolve(q);
  double pair = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) pair += rq[i] * q[i];
  pair *= k.grid.cell_volume();
  std::vector<double> t(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) t[i] = pair * q[i] - q[i] * rq[i];
  return t;
}

// <1/2 Lap f, q0> + beta^2 <f, T q0>.
inline double generator_rhs(const TestFunction& f, const DensityField& q0, double beta, const CovarianceKernel& k) {
  check_kernel(k, q0.grid);
  const auto lap = f.sample_half_laplacian(q0.grid);
  const auto fs = f.sample(q0.grid);
  const auto tq = tau_operator(q0.values, k);
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    a += lap[i] * q0.values[i];
    b += fs[i] * tq[i];
  }
  const double dv = q0.grid.cell_volume();
  return a * dv + beta * beta * b * dv;
}

struct LedgerTerm {
  std::string name;
  McEstimate value;
};

struct WeakFormLedger {
  int n = 1;
  double T = 0.0;
  std::vector<LedgerTerm> terms;  // boundary_T, boundary_0, heat, k0, k1, k2
  McEstimate residual;            // stderr: root-sum-square of the component stderrs
  McEstimate residual_paired;     // per-realization residual
  double budget = 1e-4;
  std::size_t discards = 0;

  bool low_confidence() const {
    for (const auto& t : terms)
      if (t.value.low_confidence) return true;
    return false;
  }
  bool pass() const {
    return !low_confidence() && std::abs(residual.mean) <= 3.0 * residual.stderr + budget;
  }
  CsvTable table() const {
    CsvTable t({"term", "value", "stderr"});
    for (const auto& x : terms) t.add({x.name, fmt17(x.value.mean), fmt17(x.value.stderr)});
    t.add({"residual", fmt17(residual.mean), fmt17(residual.stderr)});
    t.add({"residual_paired", fmt17(residual_paired.mean), fmt17(residual_paired.stderr)});
    return t;
  }
};

// Integrated weak form on [0, T] with Gauss-Legendre time nodes, every node read off the same path.
inline WeakFormLedger weak_residual(int n, const TestFunction& f, double T, const SheConfig& cfg, int nodes = 20,
                                    double budget = 1e-4) {
  if (n != 1 && n != 2) throw ConfigError("weak_residual supports n = 1, 2");
  if (nodes < 16) throw ConfigError("weak_residual needs at least 16 time nodes");
  SheConfig c = cfg;
  c.T_final = T;
  const SheEngine eng(c);
  const Grid& g = c.grid;
  const double dv = g.cell_volume();
  const auto rule = gauss_legendre(nodes, 0.0, T);
  std::vector<double> obs = rule.nodes;
  obs.push_back(T);
  const auto fs = f.sample(g);
  const auto lap = lattice_half_laplacian(g, fs);
  const double b2 = c.beta * c.beta;

  const Pairings p0 = compute_pairings(f, fs, eng.initial(), c.kernel);
  const double B = n == 1 ? p0.fq : p0.fq * p0.fq;

  auto fn = std::function<std::vector<double>(std::size_t)>([&](std::size_t i) {
    std::vector<double> acc(7, 0.0);  // A, C, K0, K1, K2, residual, K0 + K1 + K2 per node
    eng.simulate(i, obs, [&](std::size_t m, double t, const std::vector<double>& u) {
      const DensityField q = endpoint_density(g, u, t);
      const Pairings p = compute_pairings(f, fs, q.values, c.kernel);
      if (m + 1 == obs.size()) {
        acc[0] = n == 1 ? p.fq : p.fq * p.fq;
        return;
      }
      const double w = rule.weights[m];
      double lq = 0.0;
      for (std::size_t j = 0; j < lap.size(); ++j) lq += lap[j] * q.values[j];
      lq *= dv;
      acc[1] += w * (n == 1 ? lq : 2.0 * lq * p.fq);
      double ksum = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double v = f_kR_value(n, k, p);
        acc[2 + static_cast<std::size_t>(k)] += w * b2 * v;
        ksum += v;
      }
      // summing per node keeps the f = 1 cancellation exact (n = 2: R - 4R + 3R)
      acc[6] += w * b2 * ksum;
    });
    acc[5] = acc[0] - B - acc[1] - acc[6];
    return acc;
  });
  const auto ens = run_ensemble<std::vector<double>>(c.realizations, c.threads, fn);
  WeakFormLedger L;
  L.n = n;
  L.T = T;
  L.budget = budget;
  L.discards = ens.discards;
  const char* names[] = {"boundary_T", "heat", "k0", "k1", "k2"};
  std::vector<McEstimate> est;
  for (std::size_t k = 0; k < 5; ++k) est.push_back(estimate(column(ens.values, k), c.min_valid));
  McEstimate b0;
  b0.mean = B;
  b0.n = ens.values.size();
  L.terms.push_back({names[0], est[0]});
  L.terms.push_back({"boundary_0", b0});
  for (std::size_t k = 1; k < 5; ++k) L.terms.push_back({names[k], est[k]});
  const double res = est[0].mean - B - est[1].mean - est[2].mean - est[3].mean - est[4].mean;
  L.residual = combine_rss(res, {est[0], est[1], est[2], est[3], est[4]});
  L.residual_paired = estimate(column(ens.values, 5), c.min_valid);
  return L;
}

struct GeneratorRow {
  double T = 0.0;
  McEstimate slope;  // (E<f,q_T> - <f,q0>) / T
  double rhs = 0.0;
  double deviation = 0.0;
  double ratio = NAN;  // deviation(T) / deviation(T/2) against the next row; NaN when both are exact
  double ratio_stderr = NAN;
  bool ratio_pass = true;
};

struct GeneratorTable {
  std::vector<GeneratorRow> rows;  // decreasing T
  double rhs = 0.0;
  double heat_part = 0.0;  // <1/2 Lap f, q0>
  std::size_t discards = 0;
  bool pass() const {
    for (const auto& r : rows)
      if (!r.ratio_pass) return false;
    return true;
  }
  CsvTable table() const {
    CsvTable t({"T", "slope", "stderr", "rhs", "deviation", "ratio", "ratio_stderr", "pass"});
    for (const auto& r : rows)
      t.add({fmt17(r.T), fmt17(r.slope.mean), fmt17(r.slope.stderr), fmt17(r.rhs), fmt17(r.deviation),
             fmt17(r.ratio), fmt17(r.ratio_stderr), r.ratio_pass ? "1" : "0"});
    return t;
  }
};

struct GeneratorOptions {
  bool control_variates = true;
  double lo = 1.5, hi = 2.5;  // admissible deviation ratio per halving of T
  double exact_tol = 1e-8;    // deviations below this on both rows count as exact; no ratio is formed
};

// Finite-difference slopes of T -> E<f, q_T> at every T of T_list, read off one path per realization.
// The estimator subtracts exactly mean-zero martingale terms: with w_i = q_i dx, Y_i = e^{X_i} - 1
// the multiplicative step, P the heat step and a_i = (P f)_i - <P f, q>,
//   L = sum a_i w_i Y_i,   L S - E[L S] with S = sum w_i Y_i,   (T - t_{j+1}) beta^2 sum (h_i - <h,q>) w_i Y_i,
// h the first variation of q -> <f, T q>. All coefficients are known before the noise is drawn.
inline GeneratorTable generator_check(const TestFunction& f, const SheConfig& cfg, std::vector<double> T_list,
                                      const GeneratorOptions& opt = {}) {
  std::sort(T_list.begin(), T_list.end());
  SheConfig c = cfg;
  c.T_final = T_list.back();
  validate(c);
  const Grid& g = c.grid;
  const double dv = g.cell_volume();
  const double b2 = c.beta * c.beta;
  const auto u0 = sample_profile(c.q0, g);
  const DensityField q0(g, u0, 0.0);
  GeneratorTable out;
  out.rhs = generator_rhs(f, q0, c.beta, c.kernel);
  out.heat_part = generator_rhs(f, q0, 0.0, c.kernel);
  const auto fs = f.sample(g);
  double F0 = 0.0;
  for (std::size_t i = 0; i < fs.size(); ++i) F0 += fs[i] * u0[i];
  F0 *= dv;

  const auto plan = segment_plan(T_list, c.step());
  // per segment: heat operator, P f, and the transform of e^{beta^2 h R} - 1
  struct SegData {
    LatticeHeat heat;
    std::vector<double> Pf;
    std::vector<std::complex<double>> cov_hat;
    double cov0 = 0.0;
  };
  std::vector<SegData> segs;
  for (const auto& s : plan) {
    LatticeHeat heat(g, s.h);
    std::vector<double> Pf = fs;
    heat.apply(Pf);
    SegData sd{heat, Pf, {}, std::expm1(b2 * s.h * c.kernel.R0)};
    if (!c.kernel.is_dirac()) {
      std::vector<double> e(c.kernel.R.size());
      for (std::size_t i = 0; i < e.size(); ++i) e[i] = std::expm1(b2 * s.h * c.kernel.R[i]) / dv;
      sd.cov_hat = centered_transform(g, e);
    }
    segs.push_back(std::move(sd));
  }

  auto fn = std::function<std::vector<double>(std::size_t)>([&](std::size_t idx) {
    NoiseSource noise(c.kernel, c.rng.stream(idx));
    std::vector<double> u = u0, w(u.size()), Y(u.size()), a(u.size()), hv(u.size()), tmp(u.size());
    double sumL = 0.0, sumC2 = 0.0, sumH = 0.0, sumTH = 0.0, t = 0.0;
    std::vector<double> res;
    const double drift_scale = 0.5 * b2 * c.kernel.R0;
    for (std::size_t sgi = 0; sgi < plan.size(); ++sgi) {
      const auto& seg = plan[sgi];
      const auto& sd = segs[sgi];
      for (int s = 0; s < seg.count; ++s) {
        const double m = field_mass(g, u);
        if (!(m > kUnderflowFloor)) throw DiscardedRealization("partition function underflow");
        for (std::size_t i = 0; i < u.size(); ++i) w[i] = u[i] / m * dv;
        if (opt.control_variates) {
          double Ft = 0.0;
          for (std::size_t i = 0; i < u.size(); ++i) Ft += sd.Pf[i] * w[i];
          for (std::size_t i = 0; i < u.size(); ++i) a[i] = sd.Pf[i] - Ft;
          // h = 2 (R*q) <f,q> + f <R*q,q> - f R*q - R*(f q)
          std::vector<double> q(u.size());
          for (std::size_t i = 0; i < u.size(); ++i) q[i] = w[i] / dv;
          const auto rq = c.kernel.convolve(q);
          double fq = 0.0, rqq = 0.0;
          for (std::size_t i = 0; i < u.size(); ++i) {
            fq += fs[i] * w[i];
            rqq += rq[i] * w[i];
            tmp[i] = fs[i] * q[i];
          }
          const auto rfq = c.kernel.convolve(tmp);
          double hq = 0.0;
          for (std::size_t i = 0; i < u.size(); ++i) {
            hv[i] = 2.0 * rq[i] * fq + fs[i] * rqq - fs[i] * rq[i] - rfq[i];
            hq += hv[i] * w[i];
          }
          for (double& v : hv) v -= hq;
        }
        const auto dW = noise.increment(seg.h);
        const double drift = drift_scale * seg.h;
        for (std::size_t i = 0; i < u.size(); ++i) {
          const double x = c.beta * dW[i] - drift;
          Y[i] = std::expm1(x);
          u[i] *= std::exp(x);
          if (!std::isfinite(u[i])) throw DiscardedRealization("exponential overflow in SHE step");
        }
        sd.heat.apply(u);
        t += seg.h;
        if (opt.control_variates && b2 > 0.0) {
          double L = 0.0, S = 0.0, H = 0.0;
          for (std::size_t i = 0; i < u.size(); ++i) {
            L += a[i] * w[i] * Y[i];
            S += w[i] * Y[i];
            H += hv[i] * w[i] * Y[i];
          }
          double ELS = 0.0;
          if (c.kernel.is_dirac()) {
            for (std::size_t i = 0; i < u.size(); ++i) ELS += a[i] * w[i] * w[i];
            ELS *= sd.cov0;
          } else {
            // sum_ij a_i w_i w_j (e^{beta^2 h R_ij} - 1) through one convolution
            convolve_spectral(g, sd.cov_hat, w, tmp);
            for (std::size_t i = 0; i < u.size(); ++i) ELS += a[i] * w[i] * tmp[i];
          }
          sumL += L;
          sumC2 += L * S - ELS;
          sumH += H;
          sumTH += t * H;
        }
      }
      const double T_obs = seg.t_end;
      const DensityField q = endpoint_density(g, u, T_obs);
      double fqT = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) fqT += fs[i] * q.values[i];
      fqT *= dv;
      res.push_back(fqT - sumL + sumC2 - b2 * (T_obs * sumH - sumTH));
    }
    return res;
  });
  const auto ens = run_ensemble<std::vector<double>>(c.realizations, c.threads, fn);
  out.discards = ens.discards;
  const std::size_t K = T_list.size();
  const double nv = static_cast<double>(ens.values.size());
  std::vector<std::vector<double>> D(K);  // per-realization deviation samples
  for (std::size_t k = 0; k < K; ++k)
    for (const auto& r : ens.values) D[k].push_back((r[k] - F0) / T_list[k] - out.rhs);
  std::vector<double> mean(K);
  for (std::size_t k = 0; k < K; ++k) {
    GeneratorRow row;
    row.T = T_list[k];
    const auto e = estimate(column(ens.values, k), c.min_valid);
    row.slope = e;
    row.slope.mean = (e.mean - F0) / row.T;
    row.slope.stderr = e.stderr / row.T;
    row.rhs = out.rhs;
    row.deviation = row.slope.mean - out.rhs;
    mean[k] = row.deviation;
    out.rows.push_back(row);
  }
  auto cov = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t r = 0; r < D[i].size(); ++r) s += (D[i][r] - mean[i]) * (D[j][r] - mean[j]);
    return s / (nv - 1.0) / nv;
  };
  for (std::size_t k = 1; k < K; ++k) {
    // ratio of the deviation at T_k to the one at T_{k-1} (a halving when T_k = 2 T_{k-1})
    auto& row = out.rows[k];
    if (std::abs(mean[k]) <= opt.exact_tol && std::abs(mean[k - 1]) <= opt.exact_tol) continue;
    const double r = mean[k] / mean[k - 1];
    const double var = (cov(k, k) + r * r * cov(k - 1, k - 1) - 2.0 * r * cov(k, k - 1)) / (mean[k - 1] * mean[k - 1]);
    row.ratio = r;
    row.ratio_stderr = std::sqrt(std::max(0.0, var));
    row.ratio_pass = std::abs(r - std::clamp(r, opt.lo, opt.hi)) <= row.ratio_stderr;
  }
  std::reverse(out.rows.begin(), out.rows.end());
  return out;
}

}  // namespace polylab
