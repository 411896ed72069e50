#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cagemap/types.hpp"

namespace cagemap {

double distance(Point a, Point b) noexcept;
/// Distance from a point to the closest point of a rectangle (0 when inside).
double distance(Point p, const GeoRect& rect) noexcept;

/// Closed ring: first point equals last point.
struct Ring {
  std::vector<Point> points;
};

struct Polygon {
  Ring outer;
  std::vector<Ring> holes;
};

/// Land polygons with a bounding-box index. Immutable after construction.
class LandMask {
 public:
  LandMask() = default;
  /// Validates ring closure and simplicity; throws ValidationError.
  LandMask(std::vector<Polygon> polygons, std::string crs = {});

  const std::vector<Polygon>& polygons() const noexcept { return polygons_; }
  const std::string& crs() const noexcept { return crs_; }
  bool empty() const noexcept { return polygons_.empty(); }

  /// True when the closed rectangle touches any land (boundary contact counts).
  bool intersects(const GeoRect& rect) const;
  /// True when the rectangle lies entirely on land.
  bool contains(const GeoRect& rect) const;

 private:
  std::vector<std::size_t> candidates(const GeoRect& rect) const;

  std::vector<Polygon> polygons_;
  std::vector<GeoRect> bounds_;
  std::vector<std::size_t> by_min_x_;
  double max_width_ = 0.0;
  std::string crs_;
};

bool ring_is_simple(const Ring& ring);
bool polygon_intersects_rect(const Polygon& polygon, const GeoRect& rect);
bool point_in_polygon(const Polygon& polygon, Point p);

struct LandPartition {
  std::vector<Detection> kept;
  std::vector<Detection> rejected;
};

/// Splits detections into those clear of land and those touching it, order preserved.
/// A non-empty `detections_crs` must match the mask's CRS when the mask declares one.
LandPartition partition_on_land(std::span<const Detection> detections, const LandMask& mask,
                                std::string_view detections_crs = {});

std::vector<Detection> filter_on_land(std::span<const Detection> detections, const LandMask& mask,
                                      std::string_view detections_crs = {});

/// Integer tile coordinate relative to a grid origin.
struct TileKey {
  std::int64_t col = 0;
  std::int64_t row = 0;

  friend auto operator<=>(const TileKey&, const TileKey&) = default;
};

std::string to_string(const TileKey& key);

/// Square tiling anchored at an origin; unbounded, used for location keys.
struct TileIndexer {
  Point origin;
  double tile_size = 200.0;

  TileKey key_of(Point p) const noexcept;
};

/// Tiling of a finite extent; edge tiles are clipped to the extent.
class TileGrid {
 public:
  TileGrid(const GeoRect& extent, double tile_size);

  const GeoRect& extent() const noexcept { return extent_; }
  Point origin() const noexcept { return {extent_.min_x, extent_.min_y}; }
  double tile_size() const noexcept { return tile_size_; }
  std::size_t columns() const noexcept { return columns_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return columns_ * rows_; }

  /// Tile by row-major index (row 0 at min_y).
  GeoRect tile(std::size_t index) const;
  TileKey key(std::size_t index) const;
  /// Index of the tile owning an interior point; tiles are half-open except at
  /// the extent's max edges.
  std::optional<std::size_t> index_of(Point p) const noexcept;
  TileIndexer indexer() const noexcept { return {origin(), tile_size_}; }

 private:
  GeoRect extent_;
  double tile_size_;
  std::size_t columns_;
  std::size_t rows_;
};

TileGrid make_tiles(const GeoRect& extent, double tile_size);

/// Depth raster (meters, positive down) with a lower-left origin and square cells.
/// Row 0 is the northernmost row, as in ESRI ASCII grids.
class BathymetrySampler {
 public:
  BathymetrySampler(double x_lower_left, double y_lower_left, double cell_size, std::size_t columns,
                    std::size_t rows, std::vector<double> values, std::optional<double> nodata);

  std::size_t columns() const noexcept { return columns_; }
  std::size_t rows() const noexcept { return rows_; }
  double cell_size() const noexcept { return cell_size_; }
  GeoRect extent() const noexcept;
  std::optional<double> nodata() const noexcept { return nodata_; }

  /// Bounds of cell (col, row).
  GeoRect cell(std::size_t col, std::size_t row) const noexcept;
  /// Cell value, or nullopt for nodata.
  std::optional<double> value(std::size_t col, std::size_t row) const noexcept;
  double raw(std::size_t col, std::size_t row) const noexcept { return values_[row * columns_ + col]; }

  /// Maximum over every cell whose closed footprint meets the rectangle.
  std::optional<double> max_depth_in(const GeoRect& rect) const;

 private:
  double x0_;
  double y0_;
  double cell_size_;
  std::size_t columns_;
  std::size_t rows_;
  std::vector<double> values_;
  std::optional<double> nodata_;
};

/// Deepest value under any member box; nullopt when no valid cell is touched.
std::optional<double> max_depth_at(const CageCluster& cluster, const BathymetrySampler& bathy);

}  // namespace cagemap
