#pragma once

#include <cstdint>
#include <random>
#include <span>

#include <boost/random/normal_distribution.hpp>

namespace fluctlab {

using Engine = std::mt19937_64;

// SplitMix64 finaliser (Steele, Lea, Flood 2014).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed for work item `index` under `base`: splitmix64(base XOR splitmix64(index)).
// Distinct indices give decorrelated streams, and the mapping does not depend
// on which worker runs the item.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(base ^ splitmix64(index));
}

// Standard normal source; boost's ziggurat is fixed across platforms,
// unlike std::normal_distribution.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : engine_(seed) {}

  double operator()() { return normal_(engine_); }

  void fill(std::span<double> out) {
    for (double& v : out) v = normal_(engine_);
  }

  Engine& engine() { return engine_; }

 private:
  Engine engine_;
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace fluctlab
