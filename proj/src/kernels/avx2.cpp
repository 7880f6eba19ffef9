// Compiled with -mavx2 only; the dispatcher never calls into this table
// unless the CPU reports AVX2 support.

#include <immintrin.h>

#include <cmath>

#include "kernels_internal.hpp"

namespace carbonedge::kernels::detail {
namespace {

double combine_lanes(__m256d acc) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double total = combine_lanes(acc);
  for (; i < n; ++i) total += x[i];
  return total;
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, prod);
  }
  double total = combine_lanes(acc);
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

std::size_t argmin_avx2(const double* x, std::size_t n) {
  const double sentinel = static_cast<double>(n);
  __m256d best_val = _mm256_set1_pd(std::nan(""));
  __m256d best_idx = _mm256_set1_pd(sentinel);
  __m256d idx = _mm256_setr_pd(0.0, 1.0, 2.0, 3.0);
  const __m256d step = _mm256_set1_pd(4.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d less = _mm256_cmp_pd(v, best_val, _CMP_LT_OQ);
    const __m256d empty = _mm256_and_pd(_mm256_cmp_pd(best_val, best_val, _CMP_UNORD_Q),
                                        _mm256_cmp_pd(v, v, _CMP_ORD_Q));
    const __m256d take = _mm256_or_pd(less, empty);
    best_val = _mm256_blendv_pd(best_val, v, take);
    best_idx = _mm256_blendv_pd(best_idx, idx, take);
    idx = _mm256_add_pd(idx, step);
  }
  alignas(32) double vals[4];
  alignas(32) double idxs[4];
  _mm256_store_pd(vals, best_val);
  _mm256_store_pd(idxs, best_idx);
  std::size_t best = n;
  for (int lane = 0; lane < 4; ++lane) {
    if (std::isnan(vals[lane])) continue;
    const auto lane_idx = static_cast<std::size_t>(idxs[lane]);
    if (best == n || vals[lane] < x[best] || (!(x[best] < vals[lane]) && lane_idx < best)) {
      best = lane_idx;
    }
  }
  for (; i < n; ++i) {
    if (std::isnan(x[i])) continue;
    if (best == n || x[i] < x[best]) best = i;
  }
  return best;
}

void chord_sq_avx2(UnitVector o, const double* xs, const double* ys, const double* zs,
                   double* out, std::size_t n) {
  const __m256d ox = _mm256_set1_pd(o.x);
  const __m256d oy = _mm256_set1_pd(o.y);
  const __m256d oz = _mm256_set1_pd(o.z);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), ox);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), oy);
    const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), oz);
    const __m256d xy = _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy));
    _mm256_storeu_pd(out + i, _mm256_add_pd(xy, _mm256_mul_pd(dz, dz)));
  }
  for (; i < n; ++i) {
    const double dx = xs[i] - o.x;
    const double dy = ys[i] - o.y;
    const double dz = zs[i] - o.z;
    out[i] = (dx * dx + dy * dy) + dz * dz;
  }
}

}  // namespace

const KernelTable kAvx2Table{sum_avx2, dot_avx2, argmin_avx2, chord_sq_avx2};

}  // namespace carbonedge::kernels::detail
