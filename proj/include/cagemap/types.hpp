#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cagemap/periods.hpp"

namespace cagemap {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Axis-aligned rectangle in planar meters.
struct GeoRect {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  /// Validating constructor; throws ArgumentError on inverted or non-finite input.
  static GeoRect make(double min_x, double min_y, double max_x, double max_y);

  double width() const noexcept { return max_x - min_x; }
  double height() const noexcept { return max_y - min_y; }
  double area() const noexcept { return width() * height(); }
  Point centroid() const noexcept { return {0.5 * (min_x + max_x), 0.5 * (min_y + max_y)}; }
  bool valid() const noexcept;
  bool contains(Point p) const noexcept {
    return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
  }

  friend bool operator==(const GeoRect&, const GeoRect&) = default;
};

/// Closed-set intersection: boxes sharing only an edge or a corner intersect.
bool intersects_closed(const GeoRect& a, const GeoRect& b) noexcept;

/// Open-set intersection: the interiors overlap with positive area.
bool overlaps_interior(const GeoRect& a, const GeoRect& b) noexcept;

double overlap_area(const GeoRect& a, const GeoRect& b) noexcept;

GeoRect bounding_union(const GeoRect& a, const GeoRect& b) noexcept;

enum class CageType { circular, square, other };

std::string_view to_string(CageType type) noexcept;
std::optional<CageType> parse_cage_type(std::string_view text) noexcept;

/// A georeferenced cage bounding box, either predicted (score set) or annotated.
struct Detection {
  std::string id;
  GeoRect box;
  CageType cage_type = CageType::circular;
  std::optional<double> score;
  std::string image_id;
  int year = 0;
  Period period = Period::p2000_2004;
  // Footprint of the source image; used to decide whether a box is clipped.
  std::optional<GeoRect> image_frame;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// One image of the surveyed population.
struct ImageRecord {
  std::string image_id;
  GeoRect frame;
  int year = 0;
  std::string tile_ref;  // path or URL of the pixels
};

/// A connected set of detections from one period.
struct CageCluster {
  std::vector<Detection> members;
  GeoRect union_box;
  Period period = Period::p2000_2004;
  Point centroid;
};

}  // namespace cagemap
