#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace polylab {

// Pairwise summation; deterministic for a given input order.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 16) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

struct McEstimate {
  double mean = 0.0;
  double stderr = 0.0;
  std::size_t n = 0;
  bool low_confidence = false;

  double lo(double k = 1.0) const { return mean - k * stderr; }
  double hi(double k = 1.0) const { return mean + k * stderr; }
};

inline McEstimate estimate(std::span<const double> samples, std::size_t min_valid = 2) {
  McEstimate e;
  e.n = samples.size();
  if (e.n == 0) {
    e.low_confidence = true;
    return e;
  }
  e.mean = pairwise_sum(samples) / static_cast<double>(e.n);
  if (e.n >= 2) {
    std::vector<double> dev(samples.size());
    for (std::size_t i = 0; i < dev.size(); ++i) dev[i] = (samples[i] - e.mean) * (samples[i] - e.mean);
    const double var = pairwise_sum(dev) / static_cast<double>(e.n - 1);
    e.stderr = std::sqrt(var / static_cast<double>(e.n));
  }
  e.low_confidence = e.n < min_valid;
  return e;
}

// Difference of two estimates with independent-error propagation.
inline McEstimate combine_rss(double value, std::initializer_list<McEstimate> parts) {
  McEstimate e;
  e.mean = value;
  double s2 = 0.0;
  std::size_t n = 0;
  for (const auto& p : parts) {
    s2 += p.stderr * p.stderr;
    n = std::max(n, p.n);
    e.low_confidence = e.low_confidence || p.low_confidence;
  }
  e.stderr = std::sqrt(s2);
  e.n = n;
  return e;
}

inline unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// Evaluates fn(i) for i in [0, n) on up to `threads` workers and returns the results in index
// order. Scheduling never changes which index a result belongs to.
template <class R>
std::vector<R> parallel_map(std::size_t n, unsigned threads, const std::function<R(std::size_t)>& fn) {
  std::vector<R> out(n);
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace polylab

namespace polylab {

// Sums fn(i) over [0, n) elementwise. Work is split into fixed blocks of `block` indices, each block
// summed in index order, blocks combined in block order: the result does not depend on `threads`.
inline std::vector<double> block_reduce(std::size_t n, std::size_t width, unsigned threads, std::size_t block,
                                        const std::function<void(std::size_t, std::vector<double>&)>& add) {
  const std::size_t nb = (n + block - 1) / block;
  auto partial = parallel_map<std::vector<double>>(nb, threads, [&](std::size_t b) {
    std::vector<double> acc(width, 0.0);
    for (std::size_t i = b * block; i < std::min(n, (b + 1) * block); ++i) add(i, acc);
    return acc;
  });
  std::vector<double> out(width, 0.0);
  for (const auto& p : partial)
    for (std::size_t k = 0; k < width; ++k) out[k] += p[k];
  return out;
}

}  // namespace polylab
