#include "carbonedge/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "carbonedge/csv.hpp"
#include "carbonedge/error.hpp"
#include "carbonedge/kernels.hpp"

namespace carbonedge {

void validate(const RadiusStudyConfig& config) {
  if (config.radii_km.empty()) fail(ErrorKind::kConfig, "at least one radius is required");
  for (std::size_t i = 0; i < config.radii_km.size(); ++i) {
    const double r = config.radii_km[i];
    if (!std::isfinite(r) || r <= 0.0) fail(ErrorKind::kConfig, "radii must be positive");
    if (i > 0 && r <= config.radii_km[i - 1]) fail(ErrorKind::kConfig, "radii must be strictly increasing");
  }
}

double percentage_difference(double a, double b) {
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi > 0.0 ? (hi - lo) / hi * 100.0 : 0.0;
}

NeighborIndex::NeighborIndex(const DataCenterRegistry& dcs, std::vector<double> means)
    : dcs_(&dcs), means_(std::move(means)) {
  if (means_.size() != dcs.size()) fail(ErrorKind::kPrecondition, "one mean per data center is required");
  for (const auto& rec : dcs.records()) {
    const UnitVector v = to_unit_vector(rec.location);
    xs_.push_back(v.x);
    ys_.push_back(v.y);
    zs_.push_back(v.z);
  }
}

namespace {

std::vector<double> yearly_means(const DataCenterRegistry& dcs, const CarbonRegistry& carbon) {
  std::vector<double> means;
  means.reserve(dcs.size());
  for (const auto& rec : dcs.records()) {
    const auto* trace = carbon.find(rec.zone_id);
    if (trace == nullptr) fail(ErrorKind::kData, "data center " + rec.dc_id + ": zone " + rec.zone_id + " has no trace");
    means.push_back(trace->overall_mean());
  }
  return means;
}

}  // namespace

NeighborIndex::NeighborIndex(const DataCenterRegistry& dcs, const CarbonRegistry& carbon)
    : NeighborIndex(dcs, yearly_means(dcs, carbon)) {}

NeighborDiff NeighborIndex::best_neighbor_diff(std::size_t dc, double radius_km) const {
  if (!(radius_km > 0.0)) fail(ErrorKind::kPrecondition, "radius must be positive");
  const auto& records = dcs_->records();
  NeighborDiff out{records[dc].dc_id, std::nullopt, 0.0, 0.0};
  const std::size_t n = size();
  std::vector<double> chord(n);
  kernels::active().chord_sq(UnitVector{xs_[dc], ys_[dc], zs_[dc]}, xs_.data(), ys_.data(), zs_.data(), chord.data(),
                             n);
  // The chord test only pre-filters; membership is decided by haversine.
  const double limit = chord_sq_for_distance(radius_km) * (1.0 + 1e-9) + 1e-12;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == dc || chord[j] > limit) continue;
    const double km = haversine_km(records[dc].location, records[j].location);
    if (km > radius_km) continue;
    const double pct = percentage_difference(means_[dc], means_[j]);
    const bool better = !out.neighbor_id || pct > out.pct_diff ||
                        (pct == out.pct_diff &&
                         (km < out.distance_km || (km == out.distance_km && records[j].dc_id < *out.neighbor_id)));
    if (better) {
      out.neighbor_id = records[j].dc_id;
      out.distance_km = km;
      out.pct_diff = pct;
    }
  }
  return out;
}

std::vector<NeighborDiff> NeighborIndex::best_neighbor_diffs(double radius_km) const {
  std::vector<NeighborDiff> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(best_neighbor_diff(i, radius_km));
  return out;
}

NeighborDiff best_neighbor_diff(const DataCenterRecord& dc, const DataCenterRegistry& all_dcs,
                                const CarbonRegistry& carbon, double radius_km) {
  const NeighborIndex index(all_dcs, carbon);
  const auto& records = all_dcs.records();
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].dc_id == dc.dc_id) return index.best_neighbor_diff(i, radius_km);
  }
  fail(ErrorKind::kData, "data center " + dc.dc_id + " is not in the registry");
}

std::vector<CdfPoint> diff_cdf(std::span<const NeighborDiff> results) {
  if (results.empty()) fail(ErrorKind::kPrecondition, "CDF needs at least one data center");
  std::vector<double> v;
  v.reserve(results.size());
  for (const auto& r : results) v.push_back(r.pct_diff);
  std::sort(v.begin(), v.end());
  std::vector<CdfPoint> cdf;
  const double n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i + 1 < v.size() && v[i + 1] == v[i]) continue;
    cdf.push_back({v[i], static_cast<double>(i + 1) / n});
  }
  return cdf;
}

double fraction_exceeding(std::span<const NeighborDiff> results, double threshold_pct) {
  if (results.empty()) return 0.0;
  std::size_t count = 0;
  for (const auto& r : results) count += r.pct_diff > threshold_pct ? 1 : 0;
  return static_cast<double>(count) / static_cast<double>(results.size());
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) fail(ErrorKind::kPrecondition, "quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

LatencyQuantiles radius_latency_stats(std::span<const NeighborDiff> results, const DataCenterRegistry& dcs,
                                      const LatencyMatrix& latency) {
  LatencyQuantiles out;
  std::vector<double> one_way;
  for (const auto& r : results) {
    if (!r.neighbor_id) continue;
    const auto* a = dcs.find(r.dc_id);
    const auto* b = dcs.find(*r.neighbor_id);
    std::optional<double> rtt;
    if (a != nullptr && b != nullptr) {
      if (a->city_id == b->city_id) {
        if (latency.contains(a->city_id)) rtt = latency.intra_city_floor_ms();
      } else {
        rtt = latency.find_rtt(a->city_id, b->city_id);
      }
    }
    if (!rtt) {
      ++out.excluded;
      continue;
    }
    one_way.push_back(*rtt / 2.0);
  }
  if (one_way.empty()) fail(ErrorKind::kData, "no pairs");
  std::sort(one_way.begin(), one_way.end());
  out.pairs = one_way.size();
  out.p25_ms = quantile_sorted(one_way, 0.25);
  out.median_ms = quantile_sorted(one_way, 0.5);
  out.p75_ms = quantile_sorted(one_way, 0.75);
  return out;
}

std::vector<RadiusStudy> run_radius_study(const RadiusStudyConfig& config, const DataCenterRegistry& dcs,
                                          const CarbonRegistry& carbon, const LatencyMatrix& latency) {
  validate(config);
  const NeighborIndex index(dcs, carbon);
  std::vector<RadiusStudy> out;
  for (double radius : config.radii_km) {
    RadiusStudy study;
    study.radius_km = radius;
    study.diffs = index.best_neighbor_diffs(radius);
    if (!study.diffs.empty()) study.cdf = diff_cdf(study.diffs);
    std::size_t with_neighbor = 0;
    for (const auto& d : study.diffs) with_neighbor += d.neighbor_id ? 1 : 0;
    try {
      study.latency = radius_latency_stats(study.diffs, dcs, latency);
      study.latency_excluded = study.latency->excluded;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kData) throw;
      study.latency_excluded = with_neighbor;
    }
    out.push_back(std::move(study));
  }
  return out;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kData, "cannot write " + path.string());
  return out;
}

}  // namespace

void write_cdf_csv(const std::filesystem::path& path, const RadiusStudy& study) {
  auto out = open_csv(path);
  out << "radius_km,pct_diff,cum_frac\n";
  const std::string r = csv::format_number(study.radius_km);
  for (const auto& p : study.cdf) {
    out << r << ',' << csv::format_number(p.pct_diff) << ',' << csv::format_number(p.cum_frac) << '\n';
  }
}

void write_latency_csv(const std::filesystem::path& path, const RadiusStudy& study) {
  auto out = open_csv(path);
  out << "radius_km,quantile,one_way_ms\n";
  if (!study.latency) return;
  const std::string r = csv::format_number(study.radius_km);
  out << r << ",0.25," << csv::format_number(study.latency->p25_ms) << '\n';
  out << r << ",0.5," << csv::format_number(study.latency->median_ms) << '\n';
  out << r << ",0.75," << csv::format_number(study.latency->p75_ms) << '\n';
}

}  // namespace carbonedge
