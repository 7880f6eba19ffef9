#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace carbonedge {

// mt19937_64 has a fully specified output sequence; the transforms below are
// written out so draws do not depend on the standard library's distribution
// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform on {0, ..., n-1}; n must be positive.
  std::uint64_t index(std::uint64_t n) { return engine_() % n; }

  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace carbonedge
