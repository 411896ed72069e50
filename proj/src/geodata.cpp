#include "cagemap/geodata.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cagemap/errors.hpp"

namespace cagemap {

double distance(Point a, Point b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

double distance(Point p, const GeoRect& rect) noexcept {
  const double dx = std::max({rect.min_x - p.x, 0.0, p.x - rect.max_x});
  const double dy = std::max({rect.min_y - p.y, 0.0, p.y - rect.max_y});
  return std::hypot(dx, dy);
}

namespace {

double cross(Point o, Point a, Point b) noexcept {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

int sign(double v) noexcept { return (v > 0.0) - (v < 0.0); }

bool on_segment(Point p, Point a, Point b) noexcept {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

// Closed segment intersection, collinear overlap included.
bool segments_intersect(Point p1, Point p2, Point q1, Point q2) noexcept {
  const int d1 = sign(cross(q1, q2, p1));
  const int d2 = sign(cross(q1, q2, p2));
  const int d3 = sign(cross(p1, p2, q1));
  const int d4 = sign(cross(p1, p2, q2));
  if (d1 != d2 && d3 != d4 && d1 * d2 <= 0 && d3 * d4 <= 0) {
    if (d1 != 0 || d2 != 0) return true;
  }
  if (d1 == 0 && on_segment(p1, q1, q2)) return true;
  if (d2 == 0 && on_segment(p2, q1, q2)) return true;
  if (d3 == 0 && on_segment(q1, p1, p2)) return true;
  if (d4 == 0 && on_segment(q2, p1, p2)) return true;
  return false;
}

// Liang-Barsky clip of segment a->b against the closed rectangle. Returns
// false when the segment misses it; otherwise [t0, t1] is the clipped range.
bool clip_segment(Point a, Point b, const GeoRect& r, double& t0, double& t1) noexcept {
  t0 = 0.0;
  t1 = 1.0;
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {a.x - r.min_x, r.max_x - a.x, a.y - r.min_y, r.max_y - a.y};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
      continue;
    }
    const double t = q[i] / p[i];
    if (p[i] < 0.0) {
      t0 = std::max(t0, t);
    } else {
      t1 = std::min(t1, t);
    }
    if (t0 > t1) return false;
  }
  return true;
}

bool segment_meets_rect(Point a, Point b, const GeoRect& r) noexcept {
  if (r.contains(a) || r.contains(b)) return true;
  const Point c[4] = {{r.min_x, r.min_y}, {r.max_x, r.min_y}, {r.max_x, r.max_y}, {r.min_x, r.max_y}};
  for (int i = 0; i < 4; ++i) {
    if (segments_intersect(a, b, c[i], c[(i + 1) % 4])) return true;
  }
  return false;
}

bool segment_crosses_interior(Point a, Point b, const GeoRect& r) noexcept {
  double t0 = 0.0;
  double t1 = 0.0;
  if (!clip_segment(a, b, r, t0, t1) || !(t1 > t0)) return false;
  const double tm = 0.5 * (t0 + t1);
  const Point m{a.x + tm * (b.x - a.x), a.y + tm * (b.y - a.y)};
  return m.x > r.min_x && m.x < r.max_x && m.y > r.min_y && m.y < r.max_y;
}

bool point_in_ring(const Ring& ring, Point p) noexcept {
  bool inside = false;
  const auto& pts = ring.points;
  for (std::size_t i = 0, j = pts.size() - 1; i < pts.size(); j = i++) {
    if ((pts[i].y > p.y) != (pts[j].y > p.y)) {
      const double x = pts[j].x + (p.y - pts[j].y) * (pts[i].x - pts[j].x) / (pts[i].y - pts[j].y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

bool point_on_ring(const Ring& ring, Point p) noexcept {
  for (std::size_t i = 0; i + 1 < ring.points.size(); ++i) {
    const Point a = ring.points[i];
    const Point b = ring.points[i + 1];
    if (cross(a, b, p) == 0.0 && on_segment(p, a, b)) return true;
  }
  return false;
}

template <typename Fn>
bool any_edge(const Polygon& polygon, Fn&& fn) {
  auto ring_edges = [&](const Ring& ring) {
    for (std::size_t i = 0; i + 1 < ring.points.size(); ++i) {
      if (fn(ring.points[i], ring.points[i + 1])) return true;
    }
    return false;
  };
  if (ring_edges(polygon.outer)) return true;
  for (const auto& hole : polygon.holes) {
    if (ring_edges(hole)) return true;
  }
  return false;
}

GeoRect ring_bounds(const Ring& ring) noexcept {
  GeoRect b{ring.points.front().x, ring.points.front().y, ring.points.front().x, ring.points.front().y};
  for (const auto& p : ring.points) b = bounding_union(b, {p.x, p.y, p.x, p.y});
  return b;
}

void validate_ring(const Ring& ring, std::size_t polygon_index, std::vector<std::string>& problems) {
  std::ostringstream os;
  os << "polygon " << polygon_index;
  if (ring.points.size() < 4) {
    problems.push_back(os.str() + ": ring needs at least 4 points");
    return;
  }
  for (const auto& p : ring.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      problems.push_back(os.str() + ": non-finite coordinate");
      return;
    }
  }
  if (!(ring.points.front() == ring.points.back())) {
    problems.push_back(os.str() + ": ring is not closed");
    return;
  }
  if (!ring_is_simple(ring)) problems.push_back(os.str() + ": ring self-intersects");
}

}  // namespace

bool ring_is_simple(const Ring& ring) {
  const auto& pts = ring.points;
  if (pts.size() < 4) return false;
  const std::size_t n = pts.size() - 1;  // edge count
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) {
        // Adjacent edges may only share their common vertex.
        const Point a = pts[i], b = pts[i + 1], c = pts[j], d = pts[j + 1];
        if (j == i + 1) {
          if (cross(a, b, d) == 0.0 && ((d.x - b.x) * (a.x - b.x) + (d.y - b.y) * (a.y - b.y)) > 0.0) {
            return false;
          }
        } else {
          if (cross(c, d, b) == 0.0 && ((b.x - a.x) * (c.x - a.x) + (b.y - a.y) * (c.y - a.y)) > 0.0) {
            return false;
          }
        }
        continue;
      }
      if (segments_intersect(pts[i], pts[i + 1], pts[j], pts[j + 1])) return false;
    }
  }
  return true;
}

bool point_in_polygon(const Polygon& polygon, Point p) {
  if (point_on_ring(polygon.outer, p)) return true;
  for (const auto& hole : polygon.holes) {
    if (point_on_ring(hole, p)) return true;
  }
  if (!point_in_ring(polygon.outer, p)) return false;
  for (const auto& hole : polygon.holes) {
    if (point_in_ring(hole, p)) return false;
  }
  return true;
}

bool polygon_intersects_rect(const Polygon& polygon, const GeoRect& rect) {
  if (!intersects_closed(ring_bounds(polygon.outer), rect)) return false;
  if (any_edge(polygon, [&](Point a, Point b) { return segment_meets_rect(a, b, rect); })) return true;
  // No boundary contact: the rectangle is wholly inside, wholly outside or
  // wholly within a hole, and one corner decides which.
  return point_in_polygon(polygon, {rect.min_x, rect.min_y});
}

LandMask::LandMask(std::vector<Polygon> polygons, std::string crs)
    : polygons_(std::move(polygons)), crs_(std::move(crs)) {
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < polygons_.size(); ++i) {
    validate_ring(polygons_[i].outer, i, problems);
    for (const auto& hole : polygons_[i].holes) validate_ring(hole, i, problems);
  }
  if (!problems.empty()) {
    std::string message = "invalid land mask:";
    for (const auto& p : problems) message += "\n  " + p;
    throw ValidationError(message, problems);
  }
  bounds_.reserve(polygons_.size());
  for (const auto& polygon : polygons_) {
    bounds_.push_back(ring_bounds(polygon.outer));
    max_width_ = std::max(max_width_, bounds_.back().width());
  }
  by_min_x_.resize(polygons_.size());
  for (std::size_t i = 0; i < by_min_x_.size(); ++i) by_min_x_[i] = i;
  std::sort(by_min_x_.begin(), by_min_x_.end(),
            [&](std::size_t a, std::size_t b) { return bounds_[a].min_x < bounds_[b].min_x; });
}

std::vector<std::size_t> LandMask::candidates(const GeoRect& rect) const {
  // Polygons sorted by min_x; any hit has min_x in [rect.min_x - max_width, rect.max_x].
  const double lo = rect.min_x - max_width_;
  auto first = std::lower_bound(by_min_x_.begin(), by_min_x_.end(), lo,
                                [&](std::size_t i, double v) { return bounds_[i].min_x < v; });
  std::vector<std::size_t> out;
  for (auto it = first; it != by_min_x_.end() && bounds_[*it].min_x <= rect.max_x; ++it) {
    if (intersects_closed(bounds_[*it], rect)) out.push_back(*it);
  }
  return out;
}

bool LandMask::intersects(const GeoRect& rect) const {
  for (std::size_t i : candidates(rect)) {
    if (polygon_intersects_rect(polygons_[i], rect)) return true;
  }
  return false;
}

bool LandMask::contains(const GeoRect& rect) const {
  const Point corners[4] = {
      {rect.min_x, rect.min_y}, {rect.max_x, rect.min_y}, {rect.max_x, rect.max_y}, {rect.min_x, rect.max_y}};
  for (std::size_t i : candidates(rect)) {
    const Polygon& polygon = polygons_[i];
    const bool corners_inside =
        std::all_of(std::begin(corners), std::end(corners), [&](Point c) { return point_in_polygon(polygon, c); });
    if (!corners_inside) continue;
    if (any_edge(polygon, [&](Point a, Point b) { return segment_crosses_interior(a, b, rect); })) continue;
    return true;
  }
  return false;
}

LandPartition partition_on_land(std::span<const Detection> detections, const LandMask& mask,
                                std::string_view detections_crs) {
  if (!detections_crs.empty() && !mask.crs().empty() && detections_crs != mask.crs()) {
    throw ConfigError("CRS mismatch: detections are in " + std::string(detections_crs) +
                      " but the land mask is in " + mask.crs());
  }
  LandPartition out;
  for (const auto& d : detections) {
    (mask.intersects(d.box) ? out.rejected : out.kept).push_back(d);
  }
  return out;
}

std::vector<Detection> filter_on_land(std::span<const Detection> detections, const LandMask& mask,
                                      std::string_view detections_crs) {
  return partition_on_land(detections, mask, detections_crs).kept;
}

std::string to_string(const TileKey& key) {
  return std::to_string(key.col) + "_" + std::to_string(key.row);
}

TileKey TileIndexer::key_of(Point p) const noexcept {
  return {static_cast<std::int64_t>(std::floor((p.x - origin.x) / tile_size)),
          static_cast<std::int64_t>(std::floor((p.y - origin.y) / tile_size))};
}

TileGrid::TileGrid(const GeoRect& extent, double tile_size) : extent_(extent), tile_size_(tile_size) {
  if (!(tile_size > 0.0) || !std::isfinite(tile_size)) {
    throw ArgumentError("tile size must be positive, got " + std::to_string(tile_size));
  }
  if (!extent.valid()) throw ArgumentError("tile extent is not a valid rectangle");
  columns_ = static_cast<std::size_t>(std::ceil(extent.width() / tile_size));
  rows_ = static_cast<std::size_t>(std::ceil(extent.height() / tile_size));
}

GeoRect TileGrid::tile(std::size_t index) const {
  if (index >= size()) throw ArgumentError("tile index out of range");
  const std::size_t col = index % columns_;
  const std::size_t row = index / columns_;
  const double x0 = extent_.min_x + static_cast<double>(col) * tile_size_;
  const double y0 = extent_.min_y + static_cast<double>(row) * tile_size_;
  const double x1 = col + 1 == columns_ ? extent_.max_x : extent_.min_x + static_cast<double>(col + 1) * tile_size_;
  const double y1 = row + 1 == rows_ ? extent_.max_y : extent_.min_y + static_cast<double>(row + 1) * tile_size_;
  return {x0, y0, x1, y1};
}

TileKey TileGrid::key(std::size_t index) const {
  return {static_cast<std::int64_t>(index % columns_), static_cast<std::int64_t>(index / columns_)};
}

std::optional<std::size_t> TileGrid::index_of(Point p) const noexcept {
  if (size() == 0 || !extent_.contains(p)) return std::nullopt;
  auto locate = [&](double v, double lo, std::size_t count) {
    auto i = static_cast<std::size_t>(std::clamp(std::floor((v - lo) / tile_size_), 0.0,
                                                 static_cast<double>(count - 1)));
    // Agree with the multiplication used for tile bounds.
    if (i > 0 && v < lo + static_cast<double>(i) * tile_size_) --i;
    if (i + 1 < count && v >= lo + static_cast<double>(i + 1) * tile_size_) ++i;
    return i;
  };
  const std::size_t col = locate(p.x, extent_.min_x, columns_);
  const std::size_t row = locate(p.y, extent_.min_y, rows_);
  return row * columns_ + col;
}

TileGrid make_tiles(const GeoRect& extent, double tile_size) { return TileGrid(extent, tile_size); }

BathymetrySampler::BathymetrySampler(double x_lower_left, double y_lower_left, double cell_size,
                                     std::size_t columns, std::size_t rows, std::vector<double> values,
                                     std::optional<double> nodata)
    : x0_(x_lower_left),
      y0_(y_lower_left),
      cell_size_(cell_size),
      columns_(columns),
      rows_(rows),
      values_(std::move(values)),
      nodata_(nodata) {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw ArgumentError("bathymetry cell size must be positive");
  if (columns == 0 || rows == 0) throw ArgumentError("bathymetry grid is empty");
  if (values_.size() != columns * rows) {
    throw ArgumentError("bathymetry grid has " + std::to_string(values_.size()) + " values, expected " +
                        std::to_string(columns * rows));
  }
}

GeoRect BathymetrySampler::extent() const noexcept {
  return {x0_, y0_, x0_ + static_cast<double>(columns_) * cell_size_, y0_ + static_cast<double>(rows_) * cell_size_};
}

GeoRect BathymetrySampler::cell(std::size_t col, std::size_t row) const noexcept {
  const double x = x0_ + static_cast<double>(col) * cell_size_;
  const double y = y0_ + static_cast<double>(rows_ - 1 - row) * cell_size_;
  return {x, y, x0_ + static_cast<double>(col + 1) * cell_size_, y0_ + static_cast<double>(rows_ - row) * cell_size_};
}

std::optional<double> BathymetrySampler::value(std::size_t col, std::size_t row) const noexcept {
  const double v = raw(col, row);
  if (std::isnan(v) || (nodata_ && v == *nodata_)) return std::nullopt;
  return v;
}

std::optional<double> BathymetrySampler::max_depth_in(const GeoRect& rect) const {
  if (!intersects_closed(rect, extent())) return std::nullopt;
  const double last_col = static_cast<double>(columns_ - 1);
  const double last_row = static_cast<double>(rows_ - 1);
  auto clampi = [](double v, double hi) { return static_cast<std::size_t>(std::clamp(v, 0.0, hi)); };

  std::size_t c0 = clampi(std::floor((rect.min_x - x0_) / cell_size_), last_col);
  std::size_t c1 = clampi(std::floor((rect.max_x - x0_) / cell_size_), last_col);
  while (c0 > 0 && cell(c0 - 1, 0).max_x >= rect.min_x) --c0;
  while (c0 < columns_ - 1 && cell(c0, 0).max_x < rect.min_x) ++c0;
  while (c1 < columns_ - 1 && cell(c1 + 1, 0).min_x <= rect.max_x) ++c1;
  while (c1 > 0 && cell(c1, 0).min_x > rect.max_x) --c1;

  const double y_top = y0_ + static_cast<double>(rows_) * cell_size_;
  std::size_t r0 = clampi(std::floor((y_top - rect.max_y) / cell_size_), last_row);
  std::size_t r1 = clampi(std::floor((y_top - rect.min_y) / cell_size_), last_row);
  while (r0 > 0 && cell(0, r0 - 1).min_y <= rect.max_y) --r0;
  while (r0 < rows_ - 1 && cell(0, r0).min_y > rect.max_y) ++r0;
  while (r1 < rows_ - 1 && cell(0, r1 + 1).max_y >= rect.min_y) ++r1;
  while (r1 > 0 && cell(0, r1).max_y < rect.min_y) --r1;

  std::optional<double> best;
  for (std::size_t r = r0; r <= r1; ++r) {
    for (std::size_t c = c0; c <= c1; ++c) {
      if (!intersects_closed(cell(c, r), rect)) continue;
      if (auto v = value(c, r); v && (!best || *v > *best)) best = v;
    }
  }
  return best;
}

std::optional<double> max_depth_at(const CageCluster& cluster, const BathymetrySampler& bathy) {
  std::optional<double> best;
  for (const auto& member : cluster.members) {
    if (auto v = bathy.max_depth_in(member.box); v && (!best || *v > *best)) best = v;
  }
  return best;
}

}  // namespace cagemap
