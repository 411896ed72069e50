#pragma once

#include <span>

#include "cagemap/types.hpp"

namespace cagemap {

/// Position of a box relative to the frame of the image it was detected in.
enum class BorderStatus { interior, edge, corner };

inline constexpr double kBorderTolerance = 1e-6;

/// Surface area of a cage and the range its true area can take, in m^2.
struct AreaBounds {
  double estimate = 0.0;
  double min_area = 0.0;
  double max_area = 0.0;

  AreaBounds scaled(double factor) const noexcept {
    return {estimate * factor, min_area * factor, max_area * factor};
  }
};

/// Cage area from a bounding box.
///
///   circular, interior       pi w h / 4 for all three values
///   circular, edge / corner  max pi w h / 4, min w h / 2, estimate the midpoint
///   square                   max w h, min w h / 2, estimate 3 w h / 4
///
/// Throws UnsupportedTypeError for CageType::other and ArgumentError for
/// non-positive or non-finite dimensions.
AreaBounds area_bounds(double width, double height, CageType type, BorderStatus border);
AreaBounds area_bounds(const GeoRect& box, CageType type, BorderStatus border);

/// Classifies a box against its image frame; a side counts as touching when it
/// is within `tolerance` of (or beyond) the frame side.
BorderStatus border_status(const GeoRect& box, const GeoRect& frame,
                           double tolerance = kBorderTolerance) noexcept;

/// Interior when the detection carries no frame.
BorderStatus border_status(const Detection& detection) noexcept;

/// Area bounds of a detection using its own border status.
AreaBounds detection_area(const Detection& detection);

/// Arithmetic mean of cage areas; throws ArgumentError on an empty list.
double mean_cage_area(std::span<const double> areas);

std::string_view to_string(BorderStatus status) noexcept;

}  // namespace cagemap
