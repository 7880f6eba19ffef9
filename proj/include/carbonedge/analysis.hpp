#pragma once

// Radius-constrained comparison of yearly-mean carbon intensity between
// nearby data centers, and the latency cost of reaching the best neighbor.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "carbonedge/traces.hpp"

namespace carbonedge {

struct RadiusStudyConfig {
  std::vector<double> radii_km{200.0, 500.0, 1000.0};
};

// Throws Error(kConfig) unless radii are positive, finite and strictly increasing.
void validate(const RadiusStudyConfig& config);

// (max - min) / max * 100; 0 when both are 0.
double percentage_difference(double a, double b);

struct NeighborDiff {
  std::string dc_id;
  std::optional<std::string> neighbor_id;
  double distance_km = 0.0;
  double pct_diff = 0.0;
};

// Yearly means and unit vectors of a data-center set, laid out for radius
// queries.
class NeighborIndex {
 public:
  // Throws Error(kData) when a data center's zone has no trace.
  NeighborIndex(const DataCenterRegistry& dcs, const CarbonRegistry& carbon);
  // Uses the given means (one per data center, registry order).
  NeighborIndex(const DataCenterRegistry& dcs, std::vector<double> means);

  std::size_t size() const { return means_.size(); }
  double mean(std::size_t i) const { return means_[i]; }
  const DataCenterRegistry& datacenters() const { return *dcs_; }

  // Neighbor within `radius_km` (great-circle, self excluded) with the largest
  // percentage difference; ties go to the nearer one, then the smaller id.
  NeighborDiff best_neighbor_diff(std::size_t dc, double radius_km) const;
  std::vector<NeighborDiff> best_neighbor_diffs(double radius_km) const;

 private:
  const DataCenterRegistry* dcs_;
  std::vector<double> means_;
  std::vector<double> xs_, ys_, zs_;
};

NeighborDiff best_neighbor_diff(const DataCenterRecord& dc, const DataCenterRegistry& all_dcs,
                                const CarbonRegistry& carbon, double radius_km);

struct CdfPoint {
  double pct_diff;
  double cum_frac;
};

// Empirical CDF: one point per distinct pct_diff, ascending, ending at 1.
// Throws Error(kPrecondition) on empty input.
std::vector<CdfPoint> diff_cdf(std::span<const NeighborDiff> results);

// Fraction of data centers whose pct_diff exceeds `threshold_pct`.
double fraction_exceeding(std::span<const NeighborDiff> results, double threshold_pct);

struct LatencyQuantiles {
  double p25_ms = 0.0;
  double median_ms = 0.0;
  double p75_ms = 0.0;
  std::size_t pairs = 0;
  std::size_t excluded = 0;  // neighbor pairs without a latency entry
};

// Linear-interpolation quantile of sorted data, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

// One-way (rtt / 2) latency between each data center and its best neighbor.
// Throws Error(kData, "no pairs") when no pair can be resolved.
LatencyQuantiles radius_latency_stats(std::span<const NeighborDiff> results, const DataCenterRegistry& dcs,
                                      const LatencyMatrix& latency);

struct RadiusStudy {
  double radius_km = 0.0;
  std::vector<NeighborDiff> diffs;
  std::vector<CdfPoint> cdf;
  std::optional<LatencyQuantiles> latency;  // absent when no pair resolves
  std::size_t latency_excluded = 0;
};

std::vector<RadiusStudy> run_radius_study(const RadiusStudyConfig& config, const DataCenterRegistry& dcs,
                                          const CarbonRegistry& carbon, const LatencyMatrix& latency);

// radius_km,pct_diff,cum_frac
void write_cdf_csv(const std::filesystem::path& path, const RadiusStudy& study);
// radius_km,quantile,one_way_ms
void write_latency_csv(const std::filesystem::path& path, const RadiusStudy& study);

}  // namespace carbonedge
