#include "msvar/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "msvar/error.hpp"

namespace msvar {

void check_coordinates(const GeoPoint& p) {
  if (!(p.lat >= -90.0 && p.lat <= 90.0))
    throw InputError("latitude out of range: " + std::to_string(p.lat));
  if (!(p.lon >= -180.0 && p.lon <= 180.0))
    throw InputError("longitude out of range: " + std::to_string(p.lon));
}

double haversine_distance(const GeoPoint& a, const GeoPoint& b) {
  check_coordinates(a);
  check_coordinates(b);
  constexpr double deg = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * deg;
  const double dlon = (b.lon - a.lon) * deg;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  double h = s1 * s1 + std::cos(a.lat * deg) * std::cos(b.lat * deg) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadius * std::asin(std::sqrt(h));
}

}  // namespace msvar
