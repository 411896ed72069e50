#pragma once

#include <optional>
#include <string>

#include "cagemap/types.hpp"

namespace cagemap::test {

inline Detection det(std::string id, double x0, double y0, double x1, double y1, std::string image = "img",
                     int year = 2020, std::optional<double> score = 0.9, CageType type = CageType::circular) {
  Detection d;
  d.id = std::move(id);
  d.box = GeoRect{x0, y0, x1, y1};
  d.cage_type = type;
  d.score = score;
  d.image_id = std::move(image);
  d.year = year;
  d.period = PeriodMap::standard().at(year);
  return d;
}

/// Square box of side `side` centred on (cx, cy).
inline Detection det_at(std::string id, double cx, double cy, double side = 10.0, std::string image = "img",
                        int year = 2020, std::optional<double> score = 0.9, CageType type = CageType::circular) {
  const double h = side / 2.0;
  return det(std::move(id), cx - h, cy - h, cx + h, cy + h, std::move(image), year, score, type);
}

inline Detection label_of(Detection d) {
  d.score.reset();
  return d;
}

}  // namespace cagemap::test
