#include <cmath>

#include "kernels_internal.hpp"

namespace carbonedge::kernels::detail {
namespace {

double sum_scalar(const double* x, std::size_t n) {
  double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    l0 += x[i];
    l1 += x[i + 1];
    l2 += x[i + 2];
    l3 += x[i + 3];
  }
  double total = (l0 + l1) + (l2 + l3);
  for (; i < n; ++i) total += x[i];
  return total;
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    l0 += a[i] * b[i];
    l1 += a[i + 1] * b[i + 1];
    l2 += a[i + 2] * b[i + 2];
    l3 += a[i + 3] * b[i + 3];
  }
  double total = (l0 + l1) + (l2 + l3);
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

std::size_t argmin_scalar(const double* x, std::size_t n) {
  std::size_t best = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(x[i])) continue;
    if (best == n || x[i] < x[best]) best = i;
  }
  return best;
}

void chord_sq_scalar(UnitVector o, const double* xs, const double* ys, const double* zs,
                     double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - o.x;
    const double dy = ys[i] - o.y;
    const double dz = zs[i] - o.z;
    out[i] = (dx * dx + dy * dy) + dz * dz;
  }
}

}  // namespace

const KernelTable kScalarTable{sum_scalar, dot_scalar, argmin_scalar, chord_sq_scalar};

}  // namespace carbonedge::kernels::detail
