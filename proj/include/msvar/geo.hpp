#pragma once

#include <optional>

namespace msvar {

// Mean Earth radius in meters.
inline constexpr double kEarthRadius = 6371000.0;

struct GeoPoint {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees
  double timestamp = 0.0;  // seconds since epoch
};

struct SensorLogRecord {
  GeoPoint point;
  std::optional<double> speed;  // m/s
  std::optional<double> heading;  // degrees
};

void check_coordinates(const GeoPoint& p);

// Great-circle distance on a sphere of radius kEarthRadius.
double haversine_distance(const GeoPoint& a, const GeoPoint& b);

}  // namespace msvar
