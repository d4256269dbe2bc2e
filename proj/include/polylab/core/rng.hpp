#pragma once

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include <cstdint>
#include <span>

namespace polylab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent Gaussian source for one realization.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double operator()() { return dist_(engine_); }
  void fill(std::span<double> out) {
    for (double& v : out) v = dist_(engine_);
  }

 private:
  boost::random::mt19937_64 engine_;
  boost::random::normal_distribution<double> dist_;
};

// Master seed plus the rule index -> substream. A substream depends only on
// (seed, index), never on scheduling, so any execution order reproduces it.
struct RngPlan {
  std::uint64_t seed = 20240501;

  std::uint64_t substream_seed(std::uint64_t index) const {
    return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  }
  NormalStream stream(std::uint64_t index) const { return NormalStream(substream_seed(index)); }
};

}  // namespace polylab
