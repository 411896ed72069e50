#include "cagemap/cage_geometry.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "cagemap/errors.hpp"

namespace cagemap {

AreaBounds area_bounds(double width, double height, CageType type, BorderStatus border) {
  if (!(width > 0.0) || !(height > 0.0) || !std::isfinite(width) || !std::isfinite(height)) {
    throw ArgumentError("cage box dimensions must be positive and finite, got " + std::to_string(width) + " x " +
                        std::to_string(height));
  }
  const double wh = width * height;
  switch (type) {
    case CageType::circular: {
      const double ellipse = std::numbers::pi * wh / 4.0;
      if (border == BorderStatus::interior) return {ellipse, ellipse, ellipse};
      const double lo = wh / 2.0;
      return {(ellipse + lo) / 2.0, lo, ellipse};
    }
    case CageType::square:
      return {0.75 * wh, wh / 2.0, wh};
    case CageType::other:
      break;
  }
  throw UnsupportedTypeError("no area model for cage type 'other'");
}

AreaBounds area_bounds(const GeoRect& box, CageType type, BorderStatus border) {
  return area_bounds(box.width(), box.height(), type, border);
}

BorderStatus border_status(const GeoRect& box, const GeoRect& frame, double tolerance) noexcept {
  const bool touches_x = box.min_x <= frame.min_x + tolerance || box.max_x >= frame.max_x - tolerance;
  const bool touches_y = box.min_y <= frame.min_y + tolerance || box.max_y >= frame.max_y - tolerance;
  if (touches_x && touches_y) return BorderStatus::corner;
  if (touches_x || touches_y) return BorderStatus::edge;
  return BorderStatus::interior;
}

BorderStatus border_status(const Detection& detection) noexcept {
  if (!detection.image_frame) return BorderStatus::interior;
  return border_status(detection.box, *detection.image_frame);
}

AreaBounds detection_area(const Detection& detection) {
  return area_bounds(detection.box, detection.cage_type, border_status(detection));
}

double mean_cage_area(std::span<const double> areas) {
  if (areas.empty()) throw ArgumentError("mean of an empty area list");
  return std::accumulate(areas.begin(), areas.end(), 0.0) / static_cast<double>(areas.size());
}

std::string_view to_string(BorderStatus status) noexcept {
  switch (status) {
    case BorderStatus::interior: return "interior";
    case BorderStatus::edge: return "edge";
    case BorderStatus::corner: return "corner";
  }
  return "interior";
}

}  // namespace cagemap
