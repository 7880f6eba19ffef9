#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "carbonedge/analysis.hpp"
#include "carbonedge/error.hpp"
#include "carbonedge/rng.hpp"

using namespace carbonedge;

namespace {

struct Geography {
  DataCenterRegistry dcs;
  std::vector<double> means;
};

Geography random_geography(Rng& rng, std::size_t n) {
  Geography g;
  for (std::size_t i = 0; i < n; ++i) {
    g.dcs.add({"dc" + std::to_string(i), GeoPoint(rng.uniform(35, 45), rng.uniform(-95, -75)),
               "c" + std::to_string(i), "z" + std::to_string(i)});
    g.means.push_back(rng.uniform() < 0.1 ? 0.0 : rng.uniform(20, 800));
  }
  return g;
}

// Straight scan over every pair with haversine only.
double brute_best(const Geography& g, std::size_t i, double radius) {
  double best = 0.0;
  for (std::size_t j = 0; j < g.dcs.size(); ++j) {
    if (j == i) continue;
    if (haversine_km(g.dcs.records()[i].location, g.dcs.records()[j].location) > radius) continue;
    const double hi = std::max(g.means[i], g.means[j]);
    const double pct = hi > 0 ? (hi - std::min(g.means[i], g.means[j])) / hi * 100.0 : 0.0;
    best = std::max(best, pct);
  }
  return best;
}

}  // namespace

TEST_CASE("percentage difference is symmetric and bounded") {
  CHECK(percentage_difference(100, 50) == 50);
  CHECK(percentage_difference(50, 100) == 50);
  CHECK(percentage_difference(0, 0) == 0);
  CHECK(percentage_difference(0, 10) == 100);
}

TEST_CASE("best neighbor matches a brute-force scan") {
  Rng rng(8);
  for (int k = 0; k < 50; ++k) {
    const Geography g = random_geography(rng, 2 + rng.index(30));
    const NeighborIndex index(g.dcs, g.means);
    for (double radius : {50.0, 200.0, 500.0, 1000.0}) {
      for (std::size_t i = 0; i < g.dcs.size(); ++i) {
        const auto r = index.best_neighbor_diff(i, radius);
        CHECK(r.pct_diff == brute_best(g, i, radius));
        if (r.neighbor_id) {
          CHECK(haversine_km(g.dcs.records()[i].location, g.dcs.at(*r.neighbor_id).location) <= radius);
        }
      }
    }
  }
}

TEST_CASE("a data center alone has no neighbor and a zero difference") {
  DataCenterRegistry dcs;
  dcs.add({"only", GeoPoint(40, -80), "c", "z"});
  const NeighborIndex index(dcs, std::vector<double>{300});
  const auto r = index.best_neighbor_diff(0, 1000);
  CHECK(!r.neighbor_id);
  CHECK(r.pct_diff == 0);
  const auto cdf = diff_cdf(std::vector<NeighborDiff>{r});
  REQUIRE(cdf.size() == 1);
  CHECK(cdf[0].pct_diff == 0);
  CHECK(cdf[0].cum_frac == 1);
}

TEST_CASE("empirical CDF is non-decreasing and ends at one") {
  std::vector<NeighborDiff> d;
  for (double v : {5.0, 1.0, 5.0, 3.0}) d.push_back({"x", std::nullopt, 0, v});
  const auto cdf = diff_cdf(d);
  REQUIRE(cdf.size() == 3);
  CHECK(cdf[0].pct_diff == 1);
  CHECK(cdf[0].cum_frac == 0.25);
  CHECK(cdf[1].cum_frac == 0.5);
  CHECK(cdf[2].cum_frac == 1.0);
  CHECK(fraction_exceeding(d, 3.0) == 0.5);
  CHECK_THROWS_AS(diff_cdf({}), Error);
}

TEST_CASE("quantiles interpolate linearly") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(quantile_sorted(v, 0.5) == 2.5);
  CHECK(quantile_sorted(v, 0.25) == 1.75);
  CHECK(quantile_sorted(v, 1.0) == 4);
}

TEST_CASE("radius study reports one-way latency and exclusions") {
  DataCenterRegistry dcs;
  dcs.add({"a", GeoPoint(40, -80), "ca", "z1"});
  dcs.add({"b", GeoPoint(40.5, -80), "cb", "z2"});
  dcs.add({"c", GeoPoint(41, -80), "cc", "z3"});
  CarbonRegistry carbon;
  const TimePoint t0 = parse_utc("2023-01-01T00:00:00Z");
  carbon.add({"z1", ""}, CarbonIntensityTrace("z1", t0, {100}));
  carbon.add({"z2", ""}, CarbonIntensityTrace("z2", t0, {400}));
  carbon.add({"z3", ""}, CarbonIntensityTrace("z3", t0, {50}));
  LatencyMatrix m({"ca", "cb", "cc"});
  m.set_rtt("cb", "cc", 10);
  RadiusStudyConfig cfg;
  cfg.radii_km = {100, 500};
  const auto studies = run_radius_study(cfg, dcs, carbon, m);
  REQUIRE(studies.size() == 2);
  const auto& s = studies[1];
  CHECK(s.latency_excluded == 1);  // a's best neighbor is b, with no entry
  REQUIRE(s.latency);
  CHECK(s.latency->pairs == 2);
  CHECK(s.latency->median_ms == 5);
  CHECK_THROWS_AS(validate(RadiusStudyConfig{{500, 200}}), Error);
}

TEST_CASE("best-neighbor difference never shrinks as the radius grows") {
  Rng rng(2024);
  for (int k = 0; k < 200; ++k) {
    const Geography g = random_geography(rng, 5 + rng.index(40));
    const NeighborIndex index(g.dcs, g.means);
    std::vector<double> prev(g.dcs.size(), 0.0);
    double prev_frac = 0.0;
    for (double radius : {25.0, 100.0, 200.0, 350.0, 500.0, 750.0, 1000.0, 2500.0}) {
      const auto d = index.best_neighbor_diffs(radius);
      for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(d[i].pct_diff >= prev[i]);
        prev[i] = d[i].pct_diff;
      }
      const double frac = fraction_exceeding(d, 25.0);
      CHECK(frac >= prev_frac);
      prev_frac = frac;
    }
  }
}
