#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "polylab/closure/closure.hpp"
#include "polylab/diagnostics/diagnostics.hpp"
#include "polylab/hierarchy/error_form.hpp"
#include "polylab/hierarchy/hierarchy.hpp"
#include "polylab/hierarchy/msd.hpp"
#include "polylab/io/artifacts.hpp"
#include "polylab/io/config.hpp"
#include "polylab/rd/solver.hpp"
#include "polylab/she/estimators.hpp"

namespace polylab::cli {

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s = {"rd-run",          "rd-scaling",      "she-run",   "qn-estimate",
                                             "hierarchy-check", "generator-check", "error-form", "msd-trend",
                                             "closure-compare", "selftest"};
  return s;
}

// Flags that are not part of the config file.
struct Options {
  double p = 2.0;
  double t_max = 0.0;  // 0: time.T
  double t_min = 0.0;  // 0: min(1e2, t_max / 10)
  int n = 1;
  std::string f = "gaussian";
  double eps = 0.5;
  std::vector<double> T_list;
  std::vector<double> betas;
};

struct Outcome {
  std::vector<std::pair<std::string, std::string>> files;  // name, content
  Summary summary;
};

// Per-subcommand defaults; a config file and --set override them.
inline Config defaults_for(const std::string& sub) {
  std::map<std::string, std::string> d = {
      {"grid.d", "1"},           {"grid.L", "8"},          {"grid.N", "256"},       {"model.beta", "0.5"},
      {"model.kernel", "dirac"}, {"model.phi_width", "1"}, {"model.q0", "gauss_cc"}, {"model.q0_width", "1"},
      {"time.dt", "0"},          {"time.T", "1"},          {"mc.realizations", "1000"}, {"mc.seed", "20240501"},
      {"out.dir", "runs"},       {"threads", std::to_string(default_threads())}};
  auto set = [&](std::initializer_list<std::pair<const char*, const char*>> kv) {
    for (auto [k, v] : kv) d[k] = v;
  };
  if (sub == "rd-run") set({{"grid.L", "200"}, {"grid.N", "4096"}, {"model.beta", "1"}, {"model.q0_width", "2"},
                            {"time.dt", "1"}, {"time.T", "100"}});
  if (sub == "rd-scaling") set({{"grid.L", "20000"}, {"grid.N", "65536"}, {"model.beta", "1"}, {"model.q0_width", "2"},
                                {"time.dt", "1e9"}, {"time.T", "1e5"}});
  if (sub == "she-run") set({{"grid.L", "12"}, {"grid.N", "128"}, {"mc.realizations", "10000"}});
  if (sub == "qn-estimate") set({{"grid.N", "128"}, {"model.kernel", "bump"}, {"model.phi_width", "0.5"},
                                 {"mc.realizations", "2000"}});
  if (sub == "hierarchy-check") set({{"grid.N", "64"}, {"model.q0", "gaussian"}, {"mc.realizations", "10000"}});
  if (sub == "generator-check") set({{"grid.N", "64"}, {"model.q0", "gaussian"}, {"time.dt", "1e-4"},
                                     {"time.T", "0.02"}, {"mc.realizations", "2000"}});
  if (sub == "error-form") set({{"grid.L", "12"}, {"grid.N", "128"}, {"model.kernel", "bump"}, {"model.beta", "0.3"},
                                {"model.q0", "delta"}, {"time.T", "4"}, {"mc.realizations", "10000"}});
  if (sub == "msd-trend") set({{"grid.d", "3"}, {"grid.L", "12"}, {"grid.N", "32"}, {"model.kernel", "bump"},
                               {"model.phi_width", "3"}, {"model.beta", "0.2"}, {"model.q0", "delta"},
                               {"time.T", "8"}, {"mc.realizations", "200"}});
  if (sub == "closure-compare") set({{"grid.N", "128"}, {"model.kernel", "bump"}, {"mc.realizations", "2000"}});
  Config c;
  for (const auto& [k, v] : d) c.set_default(k, v);
  return c;
}

inline Grid grid_of(const Config& c) {
  return Grid(static_cast<int>(c.integer("grid.d")), c.real("grid.L"), static_cast<int>(c.integer("grid.N")));
}

inline CovarianceKernel kernel_of(const Config& c, const Grid& g) {
  const std::string& k = c.str("model.kernel");
  if (k == "dirac") return make_dirac_kernel(g);
  if (k == "bump") return make_kernel({ProfileKind::smooth, c.real("model.phi_width")}, g);
  throw ConfigError("model.kernel must be dirac or bump, got '" + k + "'");
}

inline ProfileSpec q0_of(const Config& c) { return {parse_profile_kind(c.str("model.q0")), c.real("model.q0_width")}; }

inline unsigned threads_of(const Config& c) {
  const auto t = c.integer("threads");
  if (t < 1) throw ConfigError("threads must be >= 1");
  return static_cast<unsigned>(t);
}

inline SheConfig she_of(const Config& c) {
  SheConfig s;
  s.grid = grid_of(c);
  s.kernel = kernel_of(c, s.grid);
  s.beta = c.real("model.beta");
  s.dt = c.real("time.dt");
  s.T_final = c.real("time.T");
  const auto n = c.integer("mc.realizations");
  if (n < 2) throw ConfigError("mc.realizations must be >= 2");
  s.realizations = static_cast<std::size_t>(n);
  s.min_valid = std::min<std::size_t>(100, s.realizations);
  s.rng = RngPlan{c.seed("mc.seed")};
  s.q0 = q0_of(c);
  s.threads = threads_of(c);
  return s;
}

inline RDConfig rd_of(const Config& c) {
  RDConfig r;
  r.grid = grid_of(c);
  r.kernel = kernel_of(c, r.grid);
  r.beta = c.real("model.beta");
  r.dt = c.real("time.dt");
  r.T_final = c.real("time.T");
  if (!(r.dt > 0.0)) throw ConfigError("time.dt must be positive for the reaction-diffusion solver");
  return r;
}

struct InvariantSummary {
  double mass_err = 0.0;
  double energy_excess = -INFINITY;  // max E - M
  double energy_rise = -INFINITY;    // max E_{k+1} - E_k
  std::size_t dissipation_fail = 0;
  std::size_t dissipation_rows = 0;
  bool pass = true;
};

inline InvariantSummary check_series(const DiagnosticSeries& s, std::vector<InequalityReport>& reports) {
  InvariantSummary r;
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    const auto& row = s.rows[i];
    const MED m{row.M, row.E, row.D};
    r.mass_err = std::max(r.mass_err, std::abs(row.mass - 1.0));
    r.energy_excess = std::max(r.energy_excess, row.E - row.M);
    if (i > 0) r.energy_rise = std::max(r.energy_rise, row.E - s.rows[i - 1].E);
    reports.push_back(check_energy_bound(m, row.t));
    const auto d = check_dissipation(m, row.t);
    reports.push_back(d);
    if (d.applicable) {
      ++r.dissipation_rows;
      if (!d.pass) ++r.dissipation_fail;
    }
  }
  r.pass = r.mass_err <= 1e-10 && r.energy_excess <= 1e-12 && r.energy_rise <= 1e-12 && r.dissipation_fail == 0;
  return r;
}

inline void put_invariants(nlohmann::ordered_json& m, const InvariantSummary& s) {
  m["max_mass_error"] = s.mass_err;
  m["max_E_minus_M"] = s.energy_excess;
  m["max_E_increase"] = s.energy_rise;
  m["dissipation_rows"] = s.dissipation_rows;
  m["dissipation_failures"] = s.dissipation_fail;
}

inline std::string snapshot_text(const DensityField& g, double beta, const std::string& id) {
  std::ostringstream os;
  write_snapshot(os, g, beta, id);
  return os.str();
}

inline Outcome rd_run(const Config& c, const Options&) {
  RDConfig r = rd_of(c);
  if (r.grid.dim() != 1) throw ConfigError("rd-run is one-dimensional");
  r.diag_times = log_times(r.T_final * 1e-3, r.T_final, 20);
  const auto q0 = make_initial(r.grid, q0_of(c));
  const RunResult res = run(r, q0);
  Outcome o;
  o.files.push_back({"series.csv", res.series.table().str()});
  std::vector<InequalityReport> reps;
  const auto inv = check_series(res.series, reps);
  for (const auto& s : res.snapshots) reps.push_back(check_minimizer(s, 2.0));
  o.files.push_back({"inequalities.csv", inequality_table(reps).str()});
  if (!res.aborted) o.files.push_back({"snapshot_final.txt", snapshot_text(res.final_state, r.beta, r.kernel.id())});
  auto& m = o.summary.metrics;
  m["steps"] = res.steps;
  m["aborted"] = res.aborted;
  if (res.aborted) m["abort_reason"] = res.abort_reason;
  put_invariants(m, inv);
  m["clamped_mass"] = res.clamp.total();
  o.summary.pass = !res.aborted && inv.pass;
  return o;
}

// Profiles at a few times in self-similar variables xi = x / t^{2/3}, T^{2/3} g; the support
// (g > 1e-10 max) is decimated to at most ~2000 rows per time.
inline CsvTable profile_table(const std::vector<DensityField>& snaps, const std::vector<double>& times) {
  CsvTable t({"t", "x", "g", "xi", "scaled_g"});
  for (const auto& s : snaps) {
    if (std::find(times.begin(), times.end(), s.t) == times.end()) continue;
    const double mx = *std::max_element(s.values.begin(), s.values.end());
    std::size_t lo = s.values.size(), hi = 0;
    for (std::size_t i = 0; i < s.values.size(); ++i)
      if (s.values[i] > 1e-10 * mx) lo = std::min(lo, i), hi = i;
    if (lo > hi) continue;
    const std::size_t stride = std::max<std::size_t>(1, (hi - lo + 1) / 2000);
    const double a = std::pow(s.t, 2.0 / 3.0);
    for (std::size_t i = lo; i <= hi; i += stride) {
      const double x = s.grid.point(i)[0];
      t.add_numbers({s.t, x, s.values[i], x / a, a * s.values[i]});
    }
  }
  return t;
}

inline Outcome rd_scaling(const Config& c0, const Options& opt) {
  Config c = c0;
  if (opt.t_max > 0.0) c.set("time.T", fmt17(opt.t_max));
  RDConfig r = rd_of(c);
  if (r.grid.dim() != 1) throw ConfigError("rd-scaling is one-dimensional");
  const double t_max = r.T_final;
  const double t_min = opt.t_min > 0.0 ? opt.t_min : std::min(1e2, t_max / 10.0);
  if (!(opt.p > 0.0)) throw ConfigError("--p must be positive");
  r.diag_times = log_times(std::min(1.0, t_max / 1e3), t_max, 20);
  const bool stored = opt.p == 1.0 || opt.p == 2.0 || opt.p == 4.0;
  const std::vector<double> profile_times = {t_max / 100.0, t_max / 10.0, t_max};
  r.snapshot_times = stored ? profile_times : r.diag_times;
  const auto q0 = make_initial(r.grid, q0_of(c));
  const RunResult res = run(r, q0);
  if (res.aborted) throw InvariantError("reaction-diffusion run aborted: " + res.abort_reason);

  const auto t = res.series.column([](const DiagnosticRow& x) { return x.t; });
  std::vector<double> mp;
  if (opt.p == 1.0) mp = res.series.column([](const DiagnosticRow& x) { return x.m1; });
  else if (opt.p == 2.0) mp = res.series.column([](const DiagnosticRow& x) { return x.m2; });
  else if (opt.p == 4.0) mp = res.series.column([](const DiagnosticRow& x) { return x.m4; });
  else
    for (double ti : t) {
      const auto it = std::find_if(res.snapshots.begin(), res.snapshots.end(), [&](const auto& s) { return s.t == ti; });
      mp.push_back(it != res.snapshots.end() ? moment(*it, opt.p) : moment(res.final_state, opt.p));
    }
  const auto m1 = res.series.column([](const DiagnosticRow& x) { return x.m1; });
  const auto fit = fit_exponent(t, mp, t_min, t_max);
  const auto fit1 = fit_exponent(t, m1, t_min, t_max);
  const double expected = 2.0 * opt.p / 3.0;

  double sup = 0.0, lo = INFINITY, hi = 0.0;
  std::vector<InequalityReport> reps;
  for (const auto& row : res.series.rows) {
    const double v = std::pow(row.t, 2.0 / 3.0) * row.M;
    if (row.t >= 1.0) {
      sup = std::max(sup, v);
      reps.push_back(check_max_decay(row.t, row.M));
    }
    if (row.t >= t_max / 10.0) lo = std::min(lo, v), hi = std::max(hi, v);
  }
  const double variation = hi > 0.0 ? (hi - lo) / hi : 0.0;
  const auto inv = check_series(res.series, reps);

  CsvTable ft({"quantity", "p", "slope", "intercept", "stderr", "expected", "pass"});
  const bool ok = std::abs(fit.slope - expected) <= 0.05;
  ft.add({"moment", fmt17(opt.p), fmt17(fit.slope), fmt17(fit.intercept), fmt17(fit.stderr), fmt17(expected), ok ? "1" : "0"});
  ft.add({"moment", "1", fmt17(fit1.slope), fmt17(fit1.intercept), fmt17(fit1.stderr), fmt17(2.0 / 3.0),
          std::abs(fit1.slope - 2.0 / 3.0) <= 0.05 ? "1" : "0"});
  Outcome o;
  o.files.push_back({"series.csv", res.series.table().str()});
  o.files.push_back({"fit.csv", ft.str()});
  o.files.push_back({"profiles.csv", profile_table(res.snapshots, profile_times).str()});
  o.files.push_back({"inequalities.csv", inequality_table(reps).str()});
  auto& m = o.summary.metrics;
  m["p"] = opt.p;
  m["slope"] = fit.slope;
  m["slope_stderr"] = fit.stderr;
  m["expected_slope"] = expected;
  m["slope_m1"] = fit1.slope;
  m["window"] = {t_min, t_max};
  m["sup_t23_M"] = sup;
  m["last_decade_variation"] = variation;
  m["steps"] = res.steps;
  put_invariants(m, inv);
  o.summary.pass = ok && inv.pass && sup <= kMaxDecayC0;
  return o;
}

inline std::vector<std::size_t> probes_1d(const Grid& g, std::initializer_list<double> xs) {
  std::vector<std::size_t> p;
  for (double x : xs) p.push_back(nearest_flat(g, {x, 0, 0}));
  return p;
}

inline Outcome she_run(const Config& c, const Options&) {
  const SheConfig s = she_of(c);
  if (s.grid.dim() != 1) throw ConfigError("she-run probes are one-dimensional");
  const auto probes = probes_1d(s.grid, {-1.0, -0.5, 0.0, 0.5, 1.0});
  const MeanLaw ml = she_mean_law(s, probes);
  std::vector<double> ref = sample_profile(s.q0, s.grid);
  heat_propagate_inplace(s.grid, ref, s.T_final);

  CsvTable q({"T", "n", "x1", "mean", "stderr", "nreal", "discards"});
  CsvTable law({"quantity", "mean", "stderr", "reference", "z", "pass"});
  bool pass = ml.discards == 0;
  double zmax = 0.0;
  auto row = [&](const std::string& name, const McEstimate& e, double r) {
    const double z = e.stderr > 0.0 ? (e.mean - r) / e.stderr : (e.mean == r ? 0.0 : INFINITY);
    const bool ok = std::abs(z) <= 3.0;
    pass = pass && ok;
    zmax = std::max(zmax, std::abs(z));
    law.add({name, fmt17(e.mean), fmt17(e.stderr), fmt17(r), fmt17(z), ok ? "1" : "0"});
  };
  for (std::size_t k = 0; k < probes.size(); ++k) {
    q.add({fmt17(s.T_final), "1", coord_label(s.grid, probes[k]), fmt17(ml.u[k].mean), fmt17(ml.u[k].stderr),
           std::to_string(ml.u[k].n), std::to_string(ml.discards)});
    row("u(" + coord_label(s.grid, probes[k]) + ")", ml.u[k], ref[probes[k]]);
  }
  row("mass", ml.mass, 1.0);
  Outcome o;
  o.files.push_back({"qn.csv", q.str()});
  o.files.push_back({"mean_law.csv", law.str()});
  o.summary.metrics["max_abs_z"] = zmax;
  o.summary.metrics["discards"] = ml.discards;
  o.summary.pass = pass;
  return o;
}

inline Outcome qn_estimate(const Config& c, const Options& opt) {
  const SheConfig s = she_of(c);
  if (s.grid.dim() != 1) throw ConfigError("qn-estimate probes are one-dimensional");
  const auto p = probes_1d(s.grid, {-1.0, -0.5, 0.0, 0.5, 1.0});
  std::vector<std::vector<std::size_t>> tuples;
  if (opt.n == 1)
    for (auto i : p) tuples.push_back({i});
  else if (opt.n == 2)
    tuples = {{p[2], p[2]}, {p[2], p[3]}, {p[1], p[3]}, {p[0], p[4]}, {p[3], p[4]}};
  else if (opt.n == 3)
    tuples = {{p[2], p[2], p[2]}, {p[1], p[2], p[3]}, {p[0], p[2], p[4]}};
  else
    throw ConfigError("--n must be 1, 2 or 3");
  const QnResult r = estimate_Qn(s, opt.n, tuples, s.T_final);
  Outcome o;
  o.files.push_back({"qn.csv", r.table().str()});
  bool pass = r.discards == 0 && !r.low_confidence();
  if (opt.n == 2 && !s.kernel.is_dirac()) {
    // normalized densities: compare E[u u] against the deterministic two-point solve
    const auto um = second_moment_mc(s, {{tuples[0][0], tuples[0][1]}, {tuples[1][0], tuples[1][1]},
                                         {tuples[2][0], tuples[2][1]}, {tuples[3][0], tuples[3][1]},
                                         {tuples[4][0], tuples[4][1]}});
    const auto W = second_moment_oracle(s, s.T_final, std::min(0.01, s.T_final / 50.0));
    const std::size_t n = static_cast<std::size_t>(s.grid.points());
    CsvTable t({"x1", "x2", "mc", "stderr", "oracle", "rel_error", "pass"});
    double worst = 0.0;
    for (std::size_t k = 0; k < tuples.size(); ++k) {
      const double ref = W[tuples[k][0] * n + tuples[k][1]];
      const double rel = std::abs(um[k].mean - ref) / ref;
      worst = std::max(worst, rel);
      t.add({coord_label(s.grid, tuples[k][0]), coord_label(s.grid, tuples[k][1]), fmt17(um[k].mean),
             fmt17(um[k].stderr), fmt17(ref), fmt17(rel), rel <= 0.05 ? "1" : "0"});
    }
    o.files.push_back({"second_moment.csv", t.str()});
    o.summary.metrics["max_rel_error"] = worst;
    pass = pass && worst <= 0.05;
  }
  o.summary.metrics["n"] = opt.n;
  o.summary.metrics["discards"] = r.discards;
  o.summary.pass = pass;
  return o;
}

inline TestFunction test_function_named(const std::string& f) {
  if (f == "gaussian") return TestFunction::gaussian(1.0);
  if (f == "square") return TestFunction::square();
  if (f == "constant") return TestFunction::constant();
  if (f == "ramp") return TestFunction::ramp({1, 0, 0}, 0.0, 1.0);
  throw ConfigError("--f must be gaussian, square, constant or ramp");
}

inline Outcome hierarchy_check(const Config& c, const Options& opt) {
  const SheConfig s = she_of(c);
  const auto L = weak_residual(opt.n, test_function_named(opt.f), s.T_final, s, 20);
  SheConfig small = s;
  small.realizations = std::min<std::size_t>(s.realizations, 50);
  small.min_valid = 2;
  const auto L1 = weak_residual(opt.n, TestFunction::constant(), s.T_final, small, 20);
  const bool exact = L1.residual_paired.mean == 0.0 && L1.residual_paired.stderr == 0.0;
  Outcome o;
  o.files.push_back({"ledger.csv", L.table().str()});
  o.files.push_back({"ledger_constant.csv", L1.table().str()});
  auto& m = o.summary.metrics;
  m["residual"] = L.residual.mean;
  m["residual_stderr"] = L.residual.stderr;
  m["residual_paired"] = L.residual_paired.mean;
  m["residual_paired_stderr"] = L.residual_paired.stderr;
  m["budget"] = L.budget;
  m["constant_ledger_exact_zero"] = exact;
  m["discards"] = L.discards;
  o.summary.pass = L.pass() && exact && L.discards == 0;
  return o;
}

inline Outcome generator_check_cmd(const Config& c, const Options& opt) {
  const SheConfig s = she_of(c);
  const auto Ts = opt.T_list.empty() ? std::vector<double>{0.02, 0.01, 0.005} : opt.T_list;
  const auto tab = generator_check(test_function_named(opt.f == "gaussian" ? "square" : opt.f), s, Ts);
  Outcome o;
  o.files.push_back({"generator.csv", tab.table().str()});
  auto& m = o.summary.metrics;
  m["rhs"] = tab.rhs;
  m["heat_part"] = tab.heat_part;
  m["discards"] = tab.discards;
  std::vector<double> ratios;
  for (const auto& r : tab.rows)
    if (!std::isnan(r.ratio)) ratios.push_back(r.ratio);
  m["ratios"] = ratios;
  o.summary.pass = tab.pass() && tab.discards == 0;
  return o;
}

inline Outcome error_form_cmd(const Config& c, const Options& opt) {
  const SheConfig s = she_of(c);
  const auto r = error_form(test_function_named(opt.f == "gaussian" ? "square" : opt.f), opt.eps, s, 20);
  CsvTable t({"term", "value", "stderr"});
  t.add({"lhs", fmt17(r.lhs.mean), fmt17(r.lhs.stderr)});
  t.add({"rhs", fmt17(r.rhs.mean), fmt17(r.rhs.stderr)});
  t.add({"initial_term", fmt17(r.initial_term), "0"});
  t.add({"lattice_term", fmt17(r.lattice_term.mean), fmt17(r.lattice_term.stderr)});
  t.add({"nonlinear_term", fmt17(r.nonlinear_term.mean), fmt17(r.nonlinear_term.stderr)});
  t.add({"lhs_minus_rhs_paired", fmt17(r.paired.mean), fmt17(r.paired.stderr)});
  Outcome o;
  o.files.push_back({"error_form.csv", t.str()});
  auto& m = o.summary.metrics;
  m["eps"] = opt.eps;
  m["T"] = r.T;
  m["difference"] = r.lhs.mean - r.rhs.mean;
  m["combined_stderr"] = r.combined_stderr();
  m["discards"] = r.discards;
  o.summary.pass = r.pass() && r.discards == 0;
  return o;
}

inline Outcome msd_trend_cmd(const Config& c, const Options& opt) {
  const SheConfig s = she_of(c);
  const auto Ts = opt.T_list.empty() ? std::vector<double>{1, 2, 4, 8} : opt.T_list;
  const auto t = msd_trend(s, Ts);
  Outcome o;
  o.files.push_back({"msd.csv", t.table().str()});
  auto& m = o.summary.metrics;
  m["loglog_slope"] = t.slope();
  m["m2_initial"] = t.m2_initial;
  m["discards"] = t.discards;
  o.summary.pass = t.nonincreasing(1.0) && t.discards == 0;
  return o;
}

inline Outcome closure_compare(const Config& c, const Options& opt) {
  const SheConfig s = she_of(c);
  const auto betas = opt.betas.empty() ? std::vector<double>{s.beta} : opt.betas;
  const auto probes = probes_1d(s.grid, {-1.0, -0.5, 0.0, 0.5, 1.0});
  CsvTable d({"T", "beta", "defect", "scale", "stderr"});
  Outcome o;
  auto& m = o.summary.metrics;
  for (double b : betas) {
    SheConfig sb = s;
    sb.beta = b;
    const auto r = factorization_defect(sb, s.T_final, probes);
    d.add_numbers({r.T, r.beta, r.defect, r.scale, r.stderr});
    m["defect_ratio"].push_back(r.ratio());
    m["inconclusive"].push_back(r.inconclusive());
  }
  const auto cl = closure_vs_mc(s, {0.5 * s.T_final, s.T_final});
  o.files.push_back({"defect.csv", d.str()});
  o.files.push_back({"closure.csv", closure_table(cl).str()});
  m["closure_l1"] = cl.back().l1.mean;
  o.summary.pass = true;  // exploratory: measurements only
  return o;
}

// The deterministic example battery: each check is fast and has an exact or closed-form target.
inline Outcome selftest(const Config&, const Options&) {
  CsvTable t({"check", "value", "target", "tolerance", "pass"});
  bool all = true;
  auto add = [&](const std::string& name, double v, double target, double tol) {
    const bool ok = std::abs(v - target) <= tol;
    all = all && ok;
    t.add({name, fmt17(v), fmt17(target), fmt17(tol), ok ? "1" : "0"});
  };
  const Grid g1(1, 20.0, 1024);
  {
    std::vector<double> v(g1.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = heat_kernel(1.0, g1.point(i)[0]);
    const DensityField G(g1, v);
    add("heat_kernel_mass", G.mass(), 1.0, 1e-12);
    const MED m = med(G);
    add("med_M_gaussian", m.M, 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-12);
    add("med_E_gaussian", m.E, 0.5 / std::sqrt(std::numbers::pi), 1e-12);
    add("moment2_gaussian", moment(G, 2.0), 1.0, 1e-10);
    add("E_le_M", check_energy_bound(m).pass, 1.0, 0.0);
    add("dissipation_gaussian", check_dissipation(m).pass, 1.0, 0.0);
  }
  {
    std::vector<double> tt, y, k;
    for (int i = 0; i < 20; ++i) {
      tt.push_back(std::pow(10.0, 0.2 * i));
      y.push_back(std::pow(tt.back(), 4.0 / 3.0));
      k.push_back(3.0);
    }
    add("fit_slope_power_law", fit_exponent(tt, y, 1.0, 1e4).slope, 4.0 / 3.0, 1e-12);
    add("fit_slope_constant", fit_exponent(tt, k, 1.0, 1e4).slope, 0.0, 1e-12);
  }
  add("minimizer_closed_form", minimizer_lower_bound(0.5, 2.0, 1), 1.0 / 6.0, 1e-15);
  add("minimizer_uniform", minimizer_value(0.5, 2.0, 1), 1.0 / 3.0, 1e-13);
  {
    RDConfig r;
    r.beta = 0.0;
    r.grid = Grid(1, 40.0, 512);
    r.kernel = make_dirac_kernel(r.grid);
    r.dt = 0.1;
    r.T_final = 1.0;
    const auto q0 = make_initial(r.grid, {ProfileKind::gauss_cc, 1.0});
    const auto a = run(r, q0);
    const auto h = heat_propagate(q0, 1.0);
    double diff = 0.0;
    for (std::size_t i = 0; i < h.values.size(); ++i) diff = std::max(diff, std::abs(a.final_state.values[i] - h.values[i]));
    add("rd_beta0_is_heat", diff, 0.0, 1e-13);
    r.beta = 1.0;
    const auto b = run(r, q0), cl = closure_solve(r, q0);
    add("closure_is_rd_bitwise", b.final_state.values == cl.final_state.values, 1.0, 0.0);
    add("rd_mass", b.final_state.mass(), 1.0, 1e-12);
  }
  {
    const auto h = TestFunction::square();
    add("backward_heat_terminal", backward_heat_f(h, 0.5, 4.0, {1.3, 0, 0}, 1), 0.25 * 1.69, 1e-15);
    add("backward_heat_square", backward_heat_f(h, 0.5, 1.0, {1.0, 0, 0}, 1), 0.25 + 0.75, 1e-15);
  }
  {
    SheConfig s;
    s.grid = Grid(1, 8.0, 64);
    s.kernel = make_dirac_kernel(s.grid);
    s.q0 = {ProfileKind::gaussian, 1.0};
    s.realizations = 8;
    s.min_valid = 2;
    s.dt = 1e-3;
    const auto L = weak_residual(1, TestFunction::constant(), 0.1, s, 16);
    add("constant_ledger_zero", L.residual_paired.mean, 0.0, 0.0);
    const auto q0 = make_initial(s.grid, s.q0);
    double tau = 0.0;
    for (double v : tau_operator(q0.values, s.kernel)) tau += v;
    add("tau_integrates_to_zero", tau * s.grid.spacing(), 0.0, 1e-14);
    add("generator_rhs_gaussian", generator_rhs(TestFunction::square(), q0, 0.5, s.kernel),
        1.0 + 0.25 * 0.25 / std::sqrt(std::numbers::pi), 1e-6);
    s.beta = 0.0;
    s.dt = 1e-4;
    const auto G = generator_check(TestFunction::square(), s, {0.02, 0.01});
    add("generator_beta0_slope", G.rows.front().slope.mean, G.heat_part, 1e-8);
    const auto Q = estimate_Qn(s, 2, {{30, 34}, {34, 30}}, 0.1);
    add("qn_symmetry_bitwise", Q.estimates[0].mean == Q.estimates[1].mean, 1.0, 0.0);
    SheConfig b = s;
    b.grid = Grid(1, 8.0, 128);
    b.kernel = make_kernel({ProfileKind::smooth, 1.0}, b.grid);
    b.dt = 0.0;
    const auto D = factorization_defect(b, 0.5, probes_1d(b.grid, {-1.0, 0.0, 1.0}));
    add("defect_beta0", D.defect, 0.0, 1e-15);
    b.q0 = {ProfileKind::delta, 1.0};
    b.realizations = 2;
    const auto E = error_form(TestFunction::square(), 0.5, b, 16);
    add("error_form_beta0", E.lhs.mean - E.rhs.mean, 0.0, 1e-12);
  }
  add("wasserstein_point_mass", wasserstein1_to_normal({0.0}, {1.0}), std::sqrt(2.0 / std::numbers::pi), 1e-14);
  add("git_blob_hash", git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a", 1.0, 0.0);
  {
    const RngPlan p{5};
    NormalStream a = p.stream(3), b = p.stream(3);
    add("rng_substream_repeatable", a() == b(), 1.0, 0.0);
  }
  Outcome o;
  o.files.push_back({"selftest.csv", t.str()});
  o.summary.metrics["checks"] = t.rows();
  o.summary.pass = all;
  return o;
}

inline Outcome dispatch(const std::string& sub, const Config& c, const Options& opt) {
  if (sub == "rd-run") return rd_run(c, opt);
  if (sub == "rd-scaling") return rd_scaling(c, opt);
  if (sub == "she-run") return she_run(c, opt);
  if (sub == "qn-estimate") return qn_estimate(c, opt);
  if (sub == "hierarchy-check") return hierarchy_check(c, opt);
  if (sub == "generator-check") return generator_check_cmd(c, opt);
  if (sub == "error-form") return error_form_cmd(c, opt);
  if (sub == "msd-trend") return msd_trend_cmd(c, opt);
  if (sub == "closure-compare") return closure_compare(c, opt);
  if (sub == "selftest") return selftest(c, opt);
  throw ConfigError("unknown subcommand '" + sub + "'");
}

}  // namespace polylab::cli
