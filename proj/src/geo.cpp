#include "carbonedge/geo.hpp"

#include <cmath>
#include <numbers>

#include "carbonedge/error.hpp"

namespace carbonedge {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

GeoPoint::GeoPoint(double latitude_deg, double longitude_deg)
    : lat_(latitude_deg), lon_(longitude_deg) {
  if (!(lat_ >= -90.0 && lat_ <= 90.0) || !(lon_ >= -180.0 && lon_ <= 180.0)) {
    fail(ErrorKind::kValidation, "coordinate out of range: (" + std::to_string(lat_) + ", " +
                                     std::to_string(lon_) + ")");
  }
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  const double lat1 = a.latitude_deg() * kDegToRad;
  const double lat2 = b.latitude_deg() * kDegToRad;
  const double dlat = lat2 - lat1;
  const double dlon = (b.longitude_deg() - a.longitude_deg()) * kDegToRad;
  const double s_lat = std::sin(dlat / 2.0);
  const double s_lon = std::sin(dlon / 2.0);
  double h = s_lat * s_lat + std::cos(lat1) * std::cos(lat2) * s_lon * s_lon;
  if (h > 1.0) h = 1.0;
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

UnitVector to_unit_vector(const GeoPoint& p) {
  const double lat = p.latitude_deg() * kDegToRad;
  const double lon = p.longitude_deg() * kDegToRad;
  return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

double chord_sq_for_distance(double km) {
  const double half_angle = km / (2.0 * kEarthRadiusKm);
  if (half_angle >= std::numbers::pi / 2.0) return 4.0;
  const double chord = 2.0 * std::sin(half_angle);
  return chord * chord;
}

std::string map_dc_to_city(const GeoPoint& dc, std::span<const NamedPoint> cities) {
  if (cities.empty()) fail(ErrorKind::kConfig, "map_dc_to_city: empty city list");
  const NamedPoint* best = nullptr;
  double best_km = 0.0;
  for (const auto& city : cities) {
    const double km = haversine_km(dc, city.second);
    if (best == nullptr || km < best_km || (km == best_km && city.first < best->first)) {
      best = &city;
      best_km = km;
    }
  }
  return best->first;
}

}  // namespace carbonedge
