#pragma once

#include <span>
#include <string>
#include <utility>

namespace carbonedge {

inline constexpr double kEarthRadiusKm = 6371.0;

class GeoPoint {
 public:
  // Throws Error(kValidation) when either coordinate is out of range.
  GeoPoint(double latitude_deg, double longitude_deg);

  double latitude_deg() const { return lat_; }
  double longitude_deg() const { return lon_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

 private:
  double lat_;
  double lon_;
};

// Great-circle distance on a sphere of radius kEarthRadiusKm.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

// Point on the unit sphere. Squared chord length between two of these is a
// monotone function of great-circle distance, which lets radius queries run
// as plain arithmetic.
struct UnitVector {
  double x;
  double y;
  double z;
};

UnitVector to_unit_vector(const GeoPoint& p);

// Squared chord length on the unit sphere that corresponds to a great-circle
// distance of `km`. Distances beyond half the circumference saturate at 4.
double chord_sq_for_distance(double km);

using NamedPoint = std::pair<std::string, GeoPoint>;

// Nearest city by haversine distance; ties go to the lexicographically
// smallest id. Throws Error(kConfig) when `cities` is empty.
std::string map_dc_to_city(const GeoPoint& dc, std::span<const NamedPoint> cities);

}  // namespace carbonedge
