#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "polylab/core/error.hpp"
#include "polylab/core/grid.hpp"
#include "polylab/core/heat.hpp"
#include "polylab/core/kernel.hpp"
#include "polylab/diagnostics/diagnostics.hpp"
#include "polylab/io/csv.hpp"

namespace polylab {

// dg/dt = 1/2 g'' + beta^2 (<R*g, g> g - g R*g); for the Dirac kernel <R*g,g> = ||g||^2, R*g = g.
struct RDConfig {
  double beta = 1.0;
  CovarianceKernel kernel;
  Grid grid;
  double dt = 1.0;  // largest step; adaptive steps never exceed it
  double T_final = 1.0;
  std::vector<double> snapshot_times;
  std::vector<double> diag_times;  // rows land exactly on these
  int cadence = 0;                 // extra row every `cadence` steps, 0 = off
  bool adaptive = true;            // dt_n = min(dt, budget / (beta^2 rate_n))
  double reaction_budget = 0.1;
  double floor_rel = 1e-15;  // far-field roundoff cut after each heat step
  bool check_leakage = true;
};

class LeakageError : public InvariantError {
 public:
  using InvariantError::InvariantError;
};

// Largest reaction rate of the current state: sup g (Dirac) or sup of g and R*g.
inline double reaction_rate(const RDConfig& cfg, std::span<const double> g) {
  double m = *std::max_element(g.begin(), g.end());
  if (!cfg.kernel.is_dirac()) {
    const auto rg = cfg.kernel.convolve(g);
    m = std::max(m, *std::max_element(rg.begin(), rg.end()));
  }
  return m;
}

inline void validate(const RDConfig& cfg, const DensityField& q0) {
  if (!(cfg.beta >= 0.0)) throw ConfigError("model.beta must be >= 0");
  if (cfg.grid.dim() != 1) throw ConfigError("the reaction-diffusion solver is one-dimensional");
  if (!(cfg.kernel.grid == cfg.grid)) throw ConfigError("kernel and solver grids differ");
  if (!(q0.grid == cfg.grid)) throw ConfigError("initial data and solver grids differ");
  if (!(cfg.dt > 0.0)) throw ConfigError("time.dt must be positive");
  if (!(cfg.T_final > 0.0)) throw ConfigError("time.T must be positive");
  if (q0.min() < 0.0) throw ConfigError("initial data must be nonnegative");
  if (!cfg.adaptive && cfg.dt * cfg.beta * cfg.beta * reaction_rate(cfg, q0.values) > cfg.reaction_budget)
    throw ConfigError("dt * beta^2 * sup g0 exceeds the reaction budget " + fmt17(cfg.reaction_budget));
}

inline double step_size(const RDConfig& cfg, std::span<const double> g) {
  const double b2 = cfg.beta * cfg.beta;
  if (!cfg.adaptive || b2 == 0.0) return cfg.dt;
  const double rate = reaction_rate(cfg, g);
  return rate > 0.0 ? std::min(cfg.dt, cfg.reaction_budget / (b2 * rate)) : cfg.dt;
}

// Pointwise logistic update with E frozen: g' = beta^2 g (E - g).
inline double frozen_logistic(double g, double E, double beta, double dt) {
  const double b2 = beta * beta;
  if (E == 0.0) return g / (1.0 + b2 * g * dt);
  const double em = std::expm1(b2 * E * dt);
  return E * g * (1.0 + em) / (E + g * em);
}

inline DensityField reaction_substep(const DensityField& g, double E, double beta, double dt) {
  if (!(E >= 0.0)) throw DomainError("reaction_substep requires E >= 0");
  if (!(dt > 0.0)) throw DomainError("reaction_substep requires dt > 0");
  DensityField out = g;
  for (double& v : out.values) v = frozen_logistic(v, E, beta, dt);
  out.t = g.t + dt;
  return out;
}

// Exact solution of g' = beta^2 g (E(t) - g), E(t) = int g^2, over time tau.
// With P(t) = int_0^t exp(beta^2 int_0^s E), g = g0 P' / (1 + beta^2 g0 P), and mass
// conservation pins P through int log(1 + beta^2 g0 P) dx = beta^2 m tau.
inline void exact_dirac_reaction(std::vector<double>& g, double beta, double tau, double dx) {
  const double b2 = beta * beta;
  if (b2 == 0.0 || tau == 0.0) return;
  double m = 0.0;
  for (double v : g) m += v;
  m *= dx;
  if (!(m > 0.0)) return;
  // F(P) is increasing and concave with F(0) < 0, so Newton from 0 climbs monotonically
  double P = 0.0;
  for (int it = 0; it < 80; ++it) {
    double F = 0.0, dF = 0.0;
    for (double v : g) {
      if (v == 0.0) continue;
      const double a = b2 * v;
      F += std::log1p(a * P);
      dF += a / (1.0 + a * P);
    }
    F = F * dx - b2 * m * tau;
    dF *= dx;
    const double dP = -F / dF;
    P += dP;
    if (std::abs(dP) <= 4e-16 * P) break;
  }
  double s = 0.0;
  for (double& v : g) {
    v = v / (1.0 + b2 * v * P);
    s += v;
  }
  const double Pp = m / (s * dx);
  for (double& v : g) v *= Pp;
}

inline std::vector<double> nonlocal_field(const CovarianceKernel& k, std::span<const double> g, double beta) {
  const auto rg = k.convolve(g);
  const double dv = k.grid.cell_volume();
  double pair = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) pair += rg[i] * g[i];
  pair *= dv;
  std::vector<double> f(g.size());
  const double b2 = beta * beta;
  for (std::size_t i = 0; i < g.size(); ++i) f[i] = b2 * g[i] * (pair - rg[i]);
  return f;
}

// Classical RK4 on the nonlocal reaction field, R*g recomputed at every stage; substeps keep
// h * beta^2 * rate <= budget / 2.
inline ClampRecord nonlocal_rk4_reaction(std::vector<double>& g, const CovarianceKernel& k, double beta,
                                         double tau, double budget) {
  const double b2 = beta * beta;
  if (b2 == 0.0 || tau == 0.0) return {};
  const auto rg = k.convolve(g);
  const double rate = std::max(*std::max_element(g.begin(), g.end()), *std::max_element(rg.begin(), rg.end()));
  const int sub = std::max(1, static_cast<int>(std::ceil(tau * b2 * rate / (0.5 * budget))));
  const double h = tau / sub;
  std::vector<double> y(g.size());
  for (int s = 0; s < sub; ++s) {
    const auto k1 = nonlocal_field(k, g, beta);
    for (std::size_t i = 0; i < g.size(); ++i) y[i] = g[i] + 0.5 * h * k1[i];
    const auto k2 = nonlocal_field(k, y, beta);
    for (std::size_t i = 0; i < g.size(); ++i) y[i] = g[i] + 0.5 * h * k2[i];
    const auto k3 = nonlocal_field(k, y, beta);
    for (std::size_t i = 0; i < g.size(); ++i) y[i] = g[i] + h * k3[i];
    const auto k4 = nonlocal_field(k, y, beta);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return clamp_ringing(g, k.grid.cell_volume());
}

inline ClampRecord react(std::vector<double>& g, const RDConfig& cfg, double tau) {
  if (cfg.kernel.is_dirac()) {
    exact_dirac_reaction(g, cfg.beta, tau, cfg.grid.spacing());
    return {};
  }
  return nonlocal_rk4_reaction(g, cfg.kernel, cfg.beta, tau, cfg.reaction_budget);
}

// One Strang step: half reaction, exact heat flow, half reaction.
inline DensityField step(const DensityField& state, const RDConfig& cfg, double dt, ClampRecord* record = nullptr) {
  if (!(dt > 0.0)) throw DomainError("step requires dt > 0");
  DensityField out = state;
  ClampRecord rec = react(out.values, cfg, 0.5 * dt);
  rec += heat_propagate_inplace(cfg.grid, out.values, dt, cfg.floor_rel);
  rec += react(out.values, cfg, 0.5 * dt);
  out.t = state.t + dt;
  if (record) *record += rec;
  if (cfg.check_leakage) {
    const double leak = boundary_mass(out);
    if (leak >= kLeakageLimit)
      throw LeakageError("boundary leakage " + fmt17(leak) + " at t=" + fmt17(out.t) + " exceeds " +
                         fmt17(kLeakageLimit) + "; enlarge grid.L");
  }
  return out;
}

inline DensityField step(const DensityField& state, const RDConfig& cfg) {
  return step(state, cfg, step_size(cfg, state.values));
}

struct DiagnosticRow {
  double t, M, E, D, mass, m1, m2, m4, clamped_mass, leakage;
};

struct DiagnosticSeries {
  std::vector<DiagnosticRow> rows;

  static std::vector<std::string> columns() {
    return {"t", "M", "E", "D", "mass", "m1", "m2", "m4", "clamped_mass", "leakage"};
  }
  CsvTable table() const {
    CsvTable t(columns());
    for (const auto& r : rows) t.add_numbers({r.t, r.M, r.E, r.D, r.mass, r.m1, r.m2, r.m4, r.clamped_mass, r.leakage});
    return t;
  }
  template <class F>
  std::vector<double> column(F&& pick) const {
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(pick(r));
    return out;
  }
};

inline DiagnosticRow diagnose(const DensityField& g, double clamped) {
  const MED m = med(g);
  return {g.t, m.M, m.E, m.D, g.mass(), moment(g, 1.0), moment(g, 2.0), moment(g, 4.0), clamped, boundary_mass(g)};
}

struct RunResult {
  DiagnosticSeries series;
  std::vector<DensityField> snapshots;
  DensityField final_state;
  std::size_t steps = 0;
  ClampRecord clamp;
  bool aborted = false;
  std::string abort_reason;
};

inline RunResult run(const RDConfig& cfg, const DensityField& q0) {
  validate(cfg, q0);
  std::vector<double> targets;
  for (double t : cfg.diag_times)
    if (t > 0.0 && t < cfg.T_final) targets.push_back(t);
  for (double t : cfg.snapshot_times)
    if (t > 0.0 && t < cfg.T_final) targets.push_back(t);
  targets.push_back(cfg.T_final);
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  auto is_in = [](const std::vector<double>& v, double t) { return std::find(v.begin(), v.end(), t) != v.end(); };

  RunResult res;
  DensityField g = q0;
  g.t = 0.0;
  res.series.rows.push_back(diagnose(g, 0.0));
  if (is_in(cfg.snapshot_times, 0.0)) res.snapshots.push_back(g);
  std::size_t next = 0;
  try {
    while (next < targets.size()) {
      const double goal = targets[next];
      double h = step_size(cfg, g.values);
      const double remaining = goal - g.t;
      bool lands = false;
      if (remaining <= h * (1.0 + 1e-9)) {
        h = remaining;
        lands = true;
      } else if (remaining < 2.0 * h) {
        h = 0.5 * remaining;  // avoid a sliver step before the target
      }
      DensityField nxt = step(g, cfg, h, &res.clamp);
      if (lands) nxt.t = goal;
      g = std::move(nxt);
      ++res.steps;
      const bool row = lands && (is_in(cfg.diag_times, goal) || goal == cfg.T_final);
      const bool cad = cfg.cadence > 0 && res.steps % static_cast<std::size_t>(cfg.cadence) == 0;
      if (row || cad) res.series.rows.push_back(diagnose(g, res.clamp.total()));
      if (lands) {
        if (is_in(cfg.snapshot_times, goal)) res.snapshots.push_back(g);
        ++next;
      }
    }
  } catch (const InvariantError& e) {
    res.aborted = true;
    res.abort_reason = e.what();
  }
  res.final_state = g;
  return res;
}

// n log-spaced times per decade covering [t_lo, t_hi], both ends included.
inline std::vector<double> log_times(double t_lo, double t_hi, int per_decade) {
  std::vector<double> out;
  const double a = std::log10(t_lo), b = std::log10(t_hi);
  const int n = std::max(1, static_cast<int>(std::lround((b - a) * per_decade)));
  for (int i = 0; i <= n; ++i) out.push_back(i == n ? t_hi : std::pow(10.0, a + (b - a) * i / n));
  return out;
}

struct Snapshot {
  double t = 0.0, L = 0.0, beta = 0.0;
  int N = 0, d = 1;
  std::string kernel_id;
  std::vector<double> values;
};

inline void write_snapshot(std::ostream& os, const DensityField& g, double beta, const std::string& kernel_id) {
  os << "# t=" << fmt17(g.t) << " L=" << fmt17(g.grid.half_width()) << " N=" << g.grid.points()
     << " d=" << g.grid.dim() << " beta=" << fmt17(beta) << " kernel=" << kernel_id << '\n';
  for (double v : g.values) os << fmt17(v) << '\n';
}

inline void save_snapshot(const std::string& path, const DensityField& g, double beta, const std::string& kernel_id) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  write_snapshot(f, g, beta, kernel_id);
}

inline Snapshot read_snapshot(std::istream& is) {
  Snapshot s;
  std::string header;
  std::getline(is, header);
  std::istringstream hs(header);
  std::string tok;
  hs >> tok;
  if (tok != "#") throw ConfigError("snapshot header must start with '#'");
  while (hs >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError("bad snapshot header token " + tok);
    const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
    if (k == "t") s.t = std::stod(v);
    else if (k == "L") s.L = std::stod(v);
    else if (k == "N") s.N = std::stoi(v);
    else if (k == "d") s.d = std::stoi(v);
    else if (k == "beta") s.beta = std::stod(v);
    else if (k == "kernel") s.kernel_id = v;
  }
  std::size_t count = 1;
  for (int a = 0; a < s.d; ++a) count *= static_cast<std::size_t>(s.N);
  s.values.reserve(count);
  double v;
  while (s.values.size() < count && is >> v) s.values.push_back(v);
  if (s.values.size() != count) throw ConfigError("snapshot body is truncated");
  return s;
}

}  // namespace polylab
