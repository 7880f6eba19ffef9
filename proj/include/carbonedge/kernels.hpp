#pragma once

// Data-parallel arithmetic used by trace averaging, hourly emission
// accounting and radius queries. Each kernel has a scalar reference and
// vector variants; the active variant is chosen once at startup from CPU
// features and may be forced with CARBONEDGE_SIMD=scalar|avx2|neon.
//
// Reductions accumulate in four interleaved lanes that are combined as
// (l0 + l1) + (l2 + l3), followed by the tail in order. The scalar reference
// follows the same order and no variant uses fused multiply-add, so every
// variant returns bit-identical results.

#include <cstddef>
#include <span>
#include <string_view>

#include "carbonedge/geo.hpp"

namespace carbonedge::kernels {

enum class SimdLevel { kScalar, kAvx2, kNeon };

std::string_view to_string(SimdLevel level);

struct KernelTable {
  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  // Index of the first minimum; NaN entries are skipped. Returns n when every
  // entry is NaN or n == 0.
  std::size_t (*argmin)(const double* x, std::size_t n);
  // out[i] = squared distance between `origin` and (xs[i], ys[i], zs[i]).
  void (*chord_sq)(UnitVector origin, const double* xs, const double* ys,
                   const double* zs, double* out, std::size_t n);
};

bool level_supported(SimdLevel level);

// Table for a specific level; throws std::invalid_argument if the level is
// not compiled in or not supported by this CPU.
const KernelTable& table(SimdLevel level);

SimdLevel active_level();
const KernelTable& active();

inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size() < b.size() ? a.size() : b.size());
}

inline std::size_t argmin(std::span<const double> x) {
  return active().argmin(x.data(), x.size());
}

inline double mean(std::span<const double> x) {
  return x.empty() ? 0.0 : sum(x) / static_cast<double>(x.size());
}

}  // namespace carbonedge::kernels
