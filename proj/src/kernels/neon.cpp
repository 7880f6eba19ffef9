// AArch64 variant. Two float64x2 registers hold the four accumulation lanes
// so the reduction order matches the scalar reference.

#include <arm_neon.h>

#include <cmath>

#include "kernels_internal.hpp"

namespace carbonedge::kernels::detail {
namespace {

double sum_neon(const double* x, std::size_t n) {
  float64x2_t acc01 = vdupq_n_f64(0.0);
  float64x2_t acc23 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc01 = vaddq_f64(acc01, vld1q_f64(x + i));
    acc23 = vaddq_f64(acc23, vld1q_f64(x + i + 2));
  }
  double total = (vgetq_lane_f64(acc01, 0) + vgetq_lane_f64(acc01, 1)) +
                 (vgetq_lane_f64(acc23, 0) + vgetq_lane_f64(acc23, 1));
  for (; i < n; ++i) total += x[i];
  return total;
}

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc01 = vdupq_n_f64(0.0);
  float64x2_t acc23 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc01 = vaddq_f64(acc01, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    acc23 = vaddq_f64(acc23, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double total = (vgetq_lane_f64(acc01, 0) + vgetq_lane_f64(acc01, 1)) +
                 (vgetq_lane_f64(acc23, 0) + vgetq_lane_f64(acc23, 1));
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

// Comparisons dominate here and NEON gains little over the scalar loop.
std::size_t argmin_neon(const double* x, std::size_t n) {
  std::size_t best = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(x[i])) continue;
    if (best == n || x[i] < x[best]) best = i;
  }
  return best;
}

void chord_sq_neon(UnitVector o, const double* xs, const double* ys, const double* zs,
                   double* out, std::size_t n) {
  const float64x2_t ox = vdupq_n_f64(o.x);
  const float64x2_t oy = vdupq_n_f64(o.y);
  const float64x2_t oz = vdupq_n_f64(o.z);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t dx = vsubq_f64(vld1q_f64(xs + i), ox);
    const float64x2_t dy = vsubq_f64(vld1q_f64(ys + i), oy);
    const float64x2_t dz = vsubq_f64(vld1q_f64(zs + i), oz);
    const float64x2_t xy = vaddq_f64(vmulq_f64(dx, dx), vmulq_f64(dy, dy));
    vst1q_f64(out + i, vaddq_f64(xy, vmulq_f64(dz, dz)));
  }
  for (; i < n; ++i) {
    const double dx = xs[i] - o.x;
    const double dy = ys[i] - o.y;
    const double dz = zs[i] - o.z;
    out[i] = (dx * dx + dy * dy) + dz * dz;
  }
}

}  // namespace

const KernelTable kNeonTable{sum_neon, dot_neon, argmin_neon, chord_sq_neon};

}  // namespace carbonedge::kernels::detail
