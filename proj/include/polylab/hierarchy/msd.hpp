#pragma once

#include <cmath>
#include <vector>

#include "polylab/core/rng.hpp"
#include "polylab/core/stats.hpp"
#include "polylab/hierarchy/test_function.hpp"
#include "polylab/hierarchy/wasserstein.hpp"
#include "polylab/io/csv.hpp"
#include "polylab/she/sim.hpp"

namespace polylab {

struct MsdRow {
  double T = 0.0;
  McEstimate m2_over_T;     // per-realization int |x|^2 q_T / T
  double deviation = 0.0;   // |m2/T - d|
  double centered = 0.0;    // |(m2 - m2(0))/T - d|, free of the initial bump's own spread
  double w1_marginal = 0.0; // max over axes of W1(coordinate marginal of Q_1(T, sqrt(T) .), N(0,1))
  double ramp_sup = 0.0;    // sup over the ramp family of |E_{Q_1} h(x/sqrt T) - E h(Z)|
  double annealed_ratio = 0.0;  // max Q_1(T,x)/G_T(x) over |x| <= 2 sqrt(T)
};

struct MsdTable {
  int d = 3;
  double beta = 0.0;
  double m2_initial = 0.0;
  std::vector<MsdRow> rows;
  std::size_t discards = 0;

  // Nonincreasing within k stderr: dev_{i+1} <= dev_i + k * combined stderr.
  bool nonincreasing(double k = 1.0) const {
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const double se = std::hypot(rows[i].m2_over_T.stderr, rows[i - 1].m2_over_T.stderr);
      if (rows[i].deviation > rows[i - 1].deviation + k * se) return false;
    }
    return true;
  }
  // Log-log slope of the deviation against T (least squares), reported only.
  double slope() const {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows) {
      const double x = std::log(r.T), y = std::log(std::max(r.deviation, 1e-300));
      sx += x, sy += y, sxx += x * x, sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }
  CsvTable table() const {
    CsvTable t({"T", "m2_over_T", "stderr", "deviation", "centered", "w1_marginal", "ramp_sup", "annealed_ratio"});
    for (const auto& r : rows)
      t.add_numbers({r.T, r.m2_over_T.mean, r.m2_over_T.stderr, r.deviation, r.centered, r.w1_marginal, r.ramp_sup,
                     r.annealed_ratio});
    return t;
  }
};

// Random Lip(1) ramps clamp(<v, y> - b, -a, a) with v uniform on the sphere.
inline std::vector<TestFunction> ramp_family(int d, std::size_t count, std::uint64_t seed) {
  NormalStream z(seed);
  std::vector<TestFunction> out;
  for (std::size_t k = 0; k < count; ++k) {
    Point v{0, 0, 0};
    double n2 = 0.0;
    for (int a = 0; a < d; ++a) {
      v[static_cast<std::size_t>(a)] = z();
      n2 += v[static_cast<std::size_t>(a)] * v[static_cast<std::size_t>(a)];
    }
    for (auto& c : v) c /= std::sqrt(n2);
    const double b = 0.5 * z();
    const double a = 0.5 + std::abs(z());
    out.push_back(TestFunction::ramp(v, b, a));
  }
  return out;
}

// Coordinate marginal along `axis` of a density on the grid, as atoms in units of sqrt(T).
inline void marginal_atoms(const Grid& g, const std::vector<double>& Q, int axis, double T, std::vector<double>& s,
                           std::vector<double>& p) {
  const int n = g.points();
  s.assign(static_cast<std::size_t>(n), 0.0);
  p.assign(static_cast<std::size_t>(n), 0.0);
  for (int j = 0; j < n; ++j) s[static_cast<std::size_t>(j)] = g.coord(j) / std::sqrt(T);
  for (std::size_t i = 0; i < Q.size(); ++i)
    p[static_cast<std::size_t>(g.unflatten(i)[static_cast<std::size_t>(axis)])] += Q[i];
  double tot = 0.0;
  for (double v : p) tot += v;
  for (double& v : p) v /= tot;
}

inline MsdTable msd_trend(const SheConfig& cfg, const std::vector<double>& T_list, std::size_t ramps = 20,
                          std::size_t block = 16) {
  if (T_list.empty()) throw ConfigError("msd_trend needs at least one T");
  SheConfig c = cfg;
  c.T_final = T_list.back();
  const SheEngine eng(c);
  const Grid& g = c.grid;
  const int d = g.dim();
  const std::size_t K = T_list.size();
  const std::size_t V = g.size();
  std::vector<double> r2(V);
  for (std::size_t i = 0; i < V; ++i) r2[i] = squared_norm(g.point(i));

  // Slots: [k*V, (k+1)*V) sum of q_{T_k}; then K sums of m2/T, K sums of squares, K discard flags.
  const std::size_t width = K * V + 3 * K;
  std::vector<unsigned char> discarded(c.realizations, 0);
  auto acc = block_reduce(c.realizations, width, c.threads, block, [&](std::size_t idx, std::vector<double>& a) {
    std::vector<std::vector<double>> qs(K);
    std::vector<double> m(K);
    try {
      eng.simulate(idx, T_list, [&](std::size_t k, double t, const std::vector<double>& u) {
        qs[k] = endpoint_density(g, u, t).values;
        double s = 0.0;
        for (std::size_t i = 0; i < V; ++i) s += r2[i] * qs[k][i];
        m[k] = s * g.cell_volume() / t;
      });
    } catch (const DiscardedRealization&) {
      discarded[idx] = 1;
      return;
    }
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < V; ++i) a[k * V + i] += qs[k][i];
      a[K * V + k] += m[k];
      a[K * V + K + k] += m[k] * m[k];
      a[K * V + 2 * K + k] += 1.0;
    }
  });

  MsdTable out;
  out.d = d;
  out.beta = c.beta;
  for (auto f : discarded) out.discards += f;
  for (std::size_t i = 0; i < V; ++i) out.m2_initial += r2[i] * eng.initial()[i];
  out.m2_initial *= g.cell_volume();
  const auto fam = ramp_family(d, ramps, c.rng.substream_seed(~0ull));
  for (std::size_t k = 0; k < K; ++k) {
    MsdRow row;
    row.T = T_list[k];
    const double n = acc[K * V + 2 * K + k];
    if (n < 2) throw InvariantError("msd_trend: too few valid realizations");
    const double mean = acc[K * V + k] / n;
    const double var = std::max(0.0, (acc[K * V + K + k] - n * mean * mean) / (n - 1.0));
    row.m2_over_T.mean = mean;
    row.m2_over_T.stderr = std::sqrt(var / n);
    row.m2_over_T.n = static_cast<std::size_t>(n);
    row.m2_over_T.low_confidence = n < static_cast<double>(c.min_valid);
    row.deviation = std::abs(mean - d);
    row.centered = std::abs(mean - out.m2_initial / row.T - d);

    std::vector<double> Q(acc.begin() + static_cast<std::ptrdiff_t>(k * V),
                          acc.begin() + static_cast<std::ptrdiff_t>((k + 1) * V));
    for (double& v : Q) v /= n;  // Q_1 density; cell weights are Q dV
    const double dv = g.cell_volume();
    std::vector<double> s, p;
    for (int axis = 0; axis < d; ++axis) {
      marginal_atoms(g, Q, axis, row.T, s, p);
      row.w1_marginal = std::max(row.w1_marginal, wasserstein1_to_normal(s, p));
    }
    const double rt = std::sqrt(row.T);
    for (const auto& h : fam) {
      double e = 0.0;
      for (std::size_t i = 0; i < V; ++i) {
        Point x = g.point(i);
        for (auto& cmp : x) cmp /= rt;
        e += h(x) * Q[i] * dv;
      }
      row.ramp_sup = std::max(row.ramp_sup, std::abs(e - clamped_normal_mean(-h.offset, 1.0, h.cap)));
    }
    for (std::size_t i = 0; i < V; ++i)
      if (r2[i] <= 4.0 * row.T) row.annealed_ratio = std::max(row.annealed_ratio, Q[i] / heat_kernel(row.T, g.point(i), d));
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace polylab
