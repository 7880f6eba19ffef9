#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "carbonedge/kernels.hpp"
#include "carbonedge/rng.hpp"

using namespace carbonedge;
using namespace carbonedge::kernels;

namespace {

std::vector<SimdLevel> vector_levels() {
  std::vector<SimdLevel> out;
  for (auto level : {SimdLevel::kAvx2, SimdLevel::kNeon}) {
    if (level_supported(level)) out.push_back(level);
  }
  return out;
}

std::vector<double> random_values(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

// Four interleaved lanes combined as (l0 + l1) + (l2 + l3), then the tail.
double lane_sum(const std::vector<double>& x) {
  double l[4] = {0, 0, 0, 0};
  const std::size_t body = x.size() / 4 * 4;
  for (std::size_t i = 0; i < body; ++i) l[i % 4] += x[i];
  double s = (l[0] + l[1]) + (l[2] + l[3]);
  for (std::size_t i = body; i < x.size(); ++i) s += x[i];
  return s;
}

}  // namespace

TEST_CASE("scalar sum follows the documented lane order") {
  Rng rng(11);
  for (std::size_t n = 0; n < 40; ++n) {
    const auto x = random_values(rng, n, -1e3, 1e3);
    CHECK(same_bits(table(SimdLevel::kScalar).sum(x.data(), n), lane_sum(x)));
  }
}

TEST_CASE("vector kernels are bit-identical to the scalar reference") {
  const auto levels = vector_levels();
  if (levels.empty()) return;
  const KernelTable& ref = table(SimdLevel::kScalar);
  Rng rng(12);
  for (auto level : levels) {
    const KernelTable& k = table(level);
    for (std::size_t n = 0; n < 70; ++n) {
      const auto a = random_values(rng, n, -500, 500);
      const auto b = random_values(rng, n, 0, 900);
      CHECK(same_bits(k.sum(a.data(), n), ref.sum(a.data(), n)));
      CHECK(same_bits(k.dot(a.data(), b.data(), n), ref.dot(a.data(), b.data(), n)));

      auto c = a;
      for (auto& v : c) {
        if (rng.uniform() < 0.2) v = std::numeric_limits<double>::quiet_NaN();
        if (rng.uniform() < 0.2) v = std::round(v / 100.0);  // repeated minima
      }
      CHECK(k.argmin(c.data(), n) == ref.argmin(c.data(), n));

      std::vector<double> xs, ys, zs;
      for (std::size_t i = 0; i < n; ++i) {
        const auto u = to_unit_vector(GeoPoint(rng.uniform(-90, 90), rng.uniform(-180, 180)));
        xs.push_back(u.x);
        ys.push_back(u.y);
        zs.push_back(u.z);
      }
      const auto origin = to_unit_vector(GeoPoint(rng.uniform(-90, 90), rng.uniform(-180, 180)));
      std::vector<double> o1(n), o2(n);
      k.chord_sq(origin, xs.data(), ys.data(), zs.data(), o1.data(), n);
      ref.chord_sq(origin, xs.data(), ys.data(), zs.data(), o2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(same_bits(o1[i], o2[i]));
    }
  }
}

TEST_CASE("argmin skips NaN and reports n when nothing is comparable") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> v{nan, 3.0, 1.0, 1.0, nan};
  CHECK(argmin(v) == 2);
  std::vector<double> all_nan{nan, nan};
  CHECK(argmin(all_nan) == 2);
  CHECK(argmin(std::span<const double>{}) == 0);
}

TEST_CASE("mean of an empty span is zero") { CHECK(mean(std::span<const double>{}) == 0.0); }
