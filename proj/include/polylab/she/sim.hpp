#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "polylab/core/error.hpp"
#include "polylab/core/grid.hpp"
#include "polylab/core/heat.hpp"
#include "polylab/core/kernel.hpp"
#include "polylab/core/profiles.hpp"
#include "polylab/core/rng.hpp"
#include "polylab/core/stats.hpp"

namespace polylab {

// Lattice stochastic heat equation du = 1/2 Lap_h u dt + beta u dW, dW the (mollified) noise.
struct SheConfig {
  Grid grid{1, 8.0, 256};
  double beta = 0.5;
  CovarianceKernel kernel;
  double dt = 0.0;  // 0 = dx^2 / 2
  double T_final = 1.0;
  std::size_t realizations = 1000;
  RngPlan rng;
  ProfileSpec q0{ProfileKind::gauss_cc, 1.0};
  unsigned threads = 1;
  std::size_t min_valid = 100;

  double step() const { return dt > 0.0 ? dt : 0.5 * grid.spacing() * grid.spacing(); }
};

class DiscardedRealization : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void validate(const SheConfig& c) {
  if (!(c.kernel.grid == c.grid)) throw ConfigError("kernel and SHE grids differ");
  if (c.kernel.is_dirac() && c.grid.dim() != 1) throw ConfigError("the Dirac covariance requires d = 1");
  if (!(c.beta >= 0.0)) throw ConfigError("model.beta must be >= 0");
  if (!(c.T_final > 0.0)) throw ConfigError("time.T must be positive");
  const double h = c.grid.spacing();
  if (c.step() > 0.5 * h * h * (1.0 + 1e-12))
    throw ConfigError("time.dt must not exceed dx^2/2 = " + std::to_string(0.5 * h * h));
  if (c.realizations < 2) throw ConfigError("mc.realizations must be >= 2");
}

// Uniform substeps of size <= dt between consecutive observation times.
struct Segment {
  double h = 0.0;
  int count = 0;
  double t_end = 0.0;
};

inline std::vector<Segment> segment_plan(std::vector<double> obs, double dt) {
  std::sort(obs.begin(), obs.end());
  std::vector<Segment> plan;
  double t = 0.0;
  for (double te : obs) {
    if (te < t) throw DomainError("observation times must be nonnegative");
    if (te == t) {
      plan.push_back({0.0, 0, te});
      continue;
    }
    const int m = std::max(1, static_cast<int>(std::ceil((te - t) / dt * (1.0 - 1e-12))));
    plan.push_back({(te - t) / m, m, te});
    t = te;
  }
  return plan;
}

// Cellwise multiplicative step v = u exp(beta dW - beta^2 R(0) h / 2).
inline void noise_multiply(std::vector<double>& u, std::span<const double> dW, double beta, double R0, double h) {
  const double drift = 0.5 * beta * beta * R0 * h;
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] *= std::exp(beta * dW[i] - drift);
    if (!std::isfinite(u[i])) throw DiscardedRealization("exponential overflow in SHE step");
  }
}

// she_step as a pure function: noise multiplication then the lattice heat flow over h.
inline std::vector<double> she_step(std::vector<double> u, std::span<const double> dW, double beta, double R0,
                                    const LatticeHeat& heat) {
  noise_multiply(u, dW, beta, R0, heat.dt());
  heat.apply(u);
  return u;
}

// White increments of variance h/dV per cell, mollified by phi for smooth kernels.
class NoiseSource {
 public:
  NoiseSource(const CovarianceKernel& k, NormalStream stream)
      : kernel_(k), stream_(std::move(stream)), white_(k.grid.size()), dW_(k.grid.size()) {}

  std::span<const double> white(double h) {
    stream_.fill(white_);
    const double s = std::sqrt(h / kernel_.grid.cell_volume());
    for (double& v : white_) v *= s;
    return white_;
  }
  std::span<const double> increment(double h) {
    white(h);
    if (kernel_.is_dirac()) return white_;
    kernel_.mollify(white_, dW_);
    return dW_;
  }

 private:
  const CovarianceKernel& kernel_;
  NormalStream stream_;
  std::vector<double> white_;
  std::vector<double> dW_;
};

class SheEngine {
 public:
  explicit SheEngine(SheConfig cfg) : cfg_(std::move(cfg)) {
    validate(cfg_);
    u0_ = sample_profile(cfg_.q0, cfg_.grid);
  }

  const SheConfig& config() const { return cfg_; }
  const std::vector<double>& initial() const { return u0_; }

  // Runs realization `index`, calling observer(k, t_k, u) at each observation time.
  template <class Observer>
  void simulate(std::size_t index, const std::vector<double>& obs, Observer&& observer) const {
    NoiseSource noise(cfg_.kernel, cfg_.rng.stream(index));
    std::vector<double> u = u0_;
    std::size_t k = 0;
    for (const Segment& seg : segment_plan(obs, cfg_.step())) {
      if (seg.count > 0) {
        LatticeHeat heat(cfg_.grid, seg.h);
        for (int s = 0; s < seg.count; ++s) {
          noise_multiply(u, noise.increment(seg.h), cfg_.beta, cfg_.kernel.R0, seg.h);
          heat.apply(u);
        }
      }
      observer(k++, seg.t_end, std::as_const(u));
    }
  }

  std::vector<double> simulate_final(std::size_t index) const {
    std::vector<double> out;
    simulate(index, {cfg_.T_final}, [&](std::size_t, double, const std::vector<double>& u) { out = u; });
    return out;
  }

 private:
  SheConfig cfg_;
  std::vector<double> u0_;
};

inline double field_mass(const Grid& g, std::span<const double> u) {
  double s = 0.0;
  for (double v : u) s += v;
  return s * g.cell_volume();
}

inline constexpr double kUnderflowFloor = 1e-280;

// q = u / int u.
inline DensityField endpoint_density(const Grid& g, std::span<const double> u, double t = 0.0) {
  const double m = field_mass(g, u);
  if (!(m > kUnderflowFloor) || !std::isfinite(m))
    throw DiscardedRealization("partition function below the underflow floor");
  std::vector<double> q(u.begin(), u.end());
  for (double& v : q) v /= m;
  return DensityField(g, std::move(q), t);
}

template <class R>
struct Ensemble {
  std::vector<R> values;  // valid realizations in index order
  std::size_t discards = 0;
};

// Evaluates fn(index) for every realization; discarded ones are counted and dropped.
template <class R>
Ensemble<R> run_ensemble(std::size_t n, unsigned threads, const std::function<R(std::size_t)>& fn) {
  auto wrapped = std::function<std::optional<R>(std::size_t)>([&](std::size_t i) -> std::optional<R> {
    try {
      return fn(i);
    } catch (const DiscardedRealization&) {
      return std::nullopt;
    }
  });
  auto raw = parallel_map<std::optional<R>>(n, threads, wrapped);
  Ensemble<R> out;
  for (auto& r : raw) {
    if (r) out.values.push_back(std::move(*r));
    else ++out.discards;
  }
  return out;
}

// Column k of an ensemble of fixed-length vectors.
inline std::vector<double> column(const std::vector<std::vector<double>>& rows, std::size_t k) {
  std::vector<double> c;
  c.reserve(rows.size());
  for (const auto& r : rows) c.push_back(r[k]);
  return c;
}

}  // namespace polylab
