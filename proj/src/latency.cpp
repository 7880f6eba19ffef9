#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "carbonedge/csv.hpp"
#include "carbonedge/error.hpp"
#include "carbonedge/traces.hpp"

namespace carbonedge {

LatencyMatrix::LatencyMatrix(std::vector<std::string> locations, double intra_city_floor_ms)
    : locations_(std::move(locations)), floor_ms_(intra_city_floor_ms) {
  if (!(floor_ms_ >= 0.0) || !std::isfinite(floor_ms_)) {
    fail(ErrorKind::kConfig, "intra-city latency floor must be a non-negative number");
  }
  for (std::size_t i = 0; i < locations_.size(); ++i) {
    if (!index_.emplace(locations_[i], i).second) {
      fail(ErrorKind::kValidation, "duplicate latency location " + locations_[i]);
    }
  }
  const std::size_t n = locations_.size();
  rtt_.assign(n * n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < n; ++i) rtt_[i * n + i] = floor_ms_;
}

std::optional<std::size_t> LatencyMatrix::index_of(std::string_view location) const {
  auto it = index_.find(std::string(location));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool LatencyMatrix::contains(std::string_view location) const {
  return index_of(location).has_value();
}

void LatencyMatrix::set_rtt(std::string_view a, std::string_view b, double rtt_ms) {
  const auto ia = index_of(a);
  const auto ib = index_of(b);
  if (!ia || !ib) {
    fail(ErrorKind::kData, "unknown latency location in pair " + std::string(a) + "-" + std::string(b));
  }
  if (!std::isfinite(rtt_ms) || rtt_ms < 0.0) {
    fail(ErrorKind::kValidation,
         "invalid rtt for " + std::string(a) + "-" + std::string(b) + ": " + csv::format_number(rtt_ms));
  }
  if (*ia == *ib) return;
  const std::size_t n = locations_.size();
  rtt_[*ia * n + *ib] = rtt_ms;
  rtt_[*ib * n + *ia] = rtt_ms;
}

std::optional<double> LatencyMatrix::find_rtt(std::string_view a, std::string_view b) const {
  const auto ia = index_of(a);
  const auto ib = index_of(b);
  if (!ia || !ib) return std::nullopt;
  const double v = rtt_[*ia * locations_.size() + *ib];
  if (std::isnan(v)) return std::nullopt;
  return v;
}

double LatencyMatrix::rtt(std::string_view a, std::string_view b) const {
  if (auto v = find_rtt(a, b)) return *v;
  fail(ErrorKind::kData, "no latency entry for " + std::string(a) + " - " + std::string(b));
}

std::size_t LatencyMatrix::missing_pairs() const {
  std::size_t missing = 0;
  const std::size_t n = locations_.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) missing += std::isnan(rtt_[i * n + j]) ? 1 : 0;
  }
  return missing;
}

LatencyMatrix load_latency_matrix(const std::filesystem::path& path,
                                  const LatencyLoadOptions& options) {
  csv::Reader reader(path);
  const auto ca = reader.column("city_a");
  const auto cb = reader.column("city_b");
  const auto cr = reader.column("rtt_ms");
  if (!ca || !cb || !cr) {
    fail(ErrorKind::kSchema, path.string() + ": expected header city_a,city_b,rtt_ms");
  }
  const std::size_t width = std::max({*ca, *cb, *cr}) + 1;

  struct Entry {
    std::string a, b;
    double rtt;
    std::size_t line;
  };
  std::vector<Entry> entries;
  std::set<std::string> names;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    const std::string where = path.filename().string() + " line " + std::to_string(reader.line_number());
    if (fields.size() < width) fail(ErrorKind::kParse, where + ": too few fields");
    const auto rtt = csv::parse_number(fields[*cr]);
    if (!rtt) fail(ErrorKind::kParse, where + ": invalid rtt '" + fields[*cr] + "'");
    if (fields[*ca].empty() || fields[*cb].empty()) fail(ErrorKind::kParse, where + ": empty city id");
    if (!std::isfinite(*rtt) || *rtt < 0.0) fail(ErrorKind::kValidation, where + ": negative rtt");
    names.insert(fields[*ca]);
    names.insert(fields[*cb]);
    entries.push_back({fields[*ca], fields[*cb], *rtt, reader.line_number()});
  }

  // Canonical (min, max) pair -> listed values.
  std::map<std::pair<std::string, std::string>, std::vector<double>> pairs;
  for (const auto& e : entries) {
    if (e.a == e.b) continue;
    auto key = e.a < e.b ? std::make_pair(e.a, e.b) : std::make_pair(e.b, e.a);
    pairs[key].push_back(e.rtt);
  }

  LatencyMatrix matrix(std::vector<std::string>(names.begin(), names.end()),
                       options.intra_city_floor_ms);
  for (const auto& [key, values] : pairs) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (options.asymmetry == AsymmetryPolicy::kReject && *hi - *lo > 1e-9) {
      fail(ErrorKind::kValidation, "asymmetric latency for " + key.first + "-" + key.second);
    }
    double total = 0.0;
    for (double v : values) total += v;
    matrix.set_rtt(key.first, key.second, total / static_cast<double>(values.size()));
  }
  return matrix;
}

void write_latency_matrix(const std::filesystem::path& path, const LatencyMatrix& matrix) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kData, "cannot write " + path.string());
  out << "city_a,city_b,rtt_ms\n";
  const auto& locs = matrix.locations();
  for (std::size_t i = 0; i < locs.size(); ++i) {
    for (std::size_t j = i + 1; j < locs.size(); ++j) {
      if (auto v = matrix.find_rtt(locs[i], locs[j])) {
        out << csv::quote_if_needed(locs[i]) << ',' << csv::quote_if_needed(locs[j]) << ','
            << csv::format_number(*v) << '\n';
      }
    }
  }
}

std::size_t fill_missing_latency(LatencyMatrix& matrix, std::span<const NamedPoint> cities,
                                 const LinearLatencyModel& model) {
  std::size_t filled = 0;
  for (std::size_t i = 0; i < cities.size(); ++i) {
    for (std::size_t j = i + 1; j < cities.size(); ++j) {
      const auto& [a, pa] = cities[i];
      const auto& [b, pb] = cities[j];
      if (a == b || !matrix.contains(a) || !matrix.contains(b)) continue;
      if (matrix.find_rtt(a, b)) continue;
      matrix.set_rtt(a, b, model.rtt_for_km(haversine_km(pa, pb)));
      ++filled;
    }
  }
  return filled;
}

}  // namespace carbonedge
