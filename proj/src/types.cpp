#include "cagemap/types.hpp"

#include <algorithm>
#include <sstream>

#include "cagemap/errors.hpp"

namespace cagemap {

GeoRect GeoRect::make(double min_x, double min_y, double max_x, double max_y) {
  GeoRect r{min_x, min_y, max_x, max_y};
  if (!r.valid()) {
    std::ostringstream os;
    os << "invalid rectangle (" << min_x << ", " << min_y << ", " << max_x << ", " << max_y << ")";
    throw ArgumentError(os.str());
  }
  return r;
}

bool GeoRect::valid() const noexcept {
  return std::isfinite(min_x) && std::isfinite(min_y) && std::isfinite(max_x) &&
         std::isfinite(max_y) && max_x >= min_x && max_y >= min_y;
}

bool intersects_closed(const GeoRect& a, const GeoRect& b) noexcept {
  return a.min_x <= b.max_x && b.min_x <= a.max_x && a.min_y <= b.max_y && b.min_y <= a.max_y;
}

bool overlaps_interior(const GeoRect& a, const GeoRect& b) noexcept {
  return a.min_x < b.max_x && b.min_x < a.max_x && a.min_y < b.max_y && b.min_y < a.max_y;
}

double overlap_area(const GeoRect& a, const GeoRect& b) noexcept {
  const double w = std::min(a.max_x, b.max_x) - std::max(a.min_x, b.min_x);
  const double h = std::min(a.max_y, b.max_y) - std::max(a.min_y, b.min_y);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

GeoRect bounding_union(const GeoRect& a, const GeoRect& b) noexcept {
  return {std::min(a.min_x, b.min_x), std::min(a.min_y, b.min_y), std::max(a.max_x, b.max_x),
          std::max(a.max_y, b.max_y)};
}

std::string_view to_string(CageType type) noexcept {
  switch (type) {
    case CageType::circular: return "circular";
    case CageType::square: return "square";
    case CageType::other: return "other";
  }
  return "other";
}

std::optional<CageType> parse_cage_type(std::string_view text) noexcept {
  if (text == "circular") return CageType::circular;
  if (text == "square") return CageType::square;
  if (text == "other") return CageType::other;
  return std::nullopt;
}

}  // namespace cagemap
