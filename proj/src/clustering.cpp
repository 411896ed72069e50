#include "cagemap/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include "cagemap/errors.hpp"

namespace cagemap {

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::uint8_t> rank_;
};

struct CellHash {
  std::size_t operator()(const std::pair<std::int64_t, std::int64_t>& c) const noexcept {
    return std::hash<std::int64_t>()(c.first * 73856093LL ^ c.second * 19349663LL);
  }
};

}  // namespace

std::vector<std::vector<std::size_t>> radius_components(std::span<const Point> points, double distance) {
  if (!(distance >= 0.0) || !std::isfinite(distance)) {
    throw ArgumentError("distance threshold must be a finite non-negative number");
  }
  const std::size_t n = points.size();
  DisjointSet sets(n);
  const double d2 = distance * distance;
  auto linked = [&](std::size_t i, std::size_t j) {
    const double dx = points[i].x - points[j].x;
    const double dy = points[i].y - points[j].y;
    return dx * dx + dy * dy <= d2;
  };

  if (distance == 0.0) {
    // Only coincident centroids connect.
    std::map<std::pair<double, double>, std::size_t> seen;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, inserted] = seen.emplace(std::make_pair(points[i].x, points[i].y), i);
      if (!inserted) sets.unite(it->second, i);
    }
  } else {
    // Grid with cell = distance: neighbours live in the 3x3 block of cells.
    std::unordered_map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>, CellHash> grid;
    std::vector<std::pair<std::int64_t, std::int64_t>> cell_of(n);
    for (std::size_t i = 0; i < n; ++i) {
      cell_of[i] = {static_cast<std::int64_t>(std::floor(points[i].x / distance)),
                    static_cast<std::int64_t>(std::floor(points[i].y / distance))};
      grid[cell_of[i]].push_back(i);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto [cx, cy] = cell_of[i];
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
          auto it = grid.find({cx + dx, cy + dy});
          if (it == grid.end()) continue;
          for (std::size_t j : it->second) {
            if (j > i && linked(i, j)) sets.unite(i, j);
          }
        }
      }
    }
  }

  std::vector<std::vector<std::size_t>> components;
  std::unordered_map<std::size_t, std::size_t> slot;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = sets.find(i);
    auto [it, inserted] = slot.emplace(root, components.size());
    if (inserted) components.emplace_back();
    components[it->second].push_back(i);
  }
  return components;
}

GeoRect union_bbox(std::span<const Detection> members) {
  if (members.empty()) throw ArgumentError("union of an empty member list");
  GeoRect box = members.front().box;
  for (const auto& m : members) box = bounding_union(box, m.box);
  return box;
}

GeoRect union_bbox(const CageCluster& cluster) { return union_bbox(cluster.members); }

CageCluster make_cluster(std::vector<Detection> members) {
  if (members.empty()) throw ArgumentError("a cluster needs at least one member");
  const Period period = members.front().period;
  for (const auto& m : members) {
    if (m.period != period) throw ArgumentError("cluster members span more than one period");
  }
  CageCluster cluster;
  cluster.union_box = union_bbox(members);
  cluster.period = period;
  double sx = 0.0;
  double sy = 0.0;
  for (const auto& m : members) {
    const Point c = m.box.centroid();
    sx += c.x;
    sy += c.y;
  }
  const double n = static_cast<double>(members.size());
  cluster.centroid = {sx / n, sy / n};
  cluster.members = std::move(members);
  return cluster;
}

std::vector<CageCluster> cluster_detections(std::span<const Detection> detections, double distance_threshold,
                                            std::size_t min_cluster_size) {
  if (!(distance_threshold >= 0.0) || !std::isfinite(distance_threshold)) {
    throw ArgumentError("distance threshold must be a finite non-negative number");
  }
  if (min_cluster_size < 1) throw ArgumentError("minimum cluster size must be at least 1");

  std::map<Period, std::vector<std::size_t>> by_period;
  for (std::size_t i = 0; i < detections.size(); ++i) by_period[detections[i].period].push_back(i);

  std::vector<CageCluster> clusters;
  for (const auto& [period, indices] : by_period) {
    std::vector<Point> centroids;
    centroids.reserve(indices.size());
    for (std::size_t i : indices) centroids.push_back(detections[i].box.centroid());
    for (const auto& component : radius_components(centroids, distance_threshold)) {
      if (component.size() < min_cluster_size) continue;
      std::vector<Detection> members;
      members.reserve(component.size());
      for (std::size_t k : component) members.push_back(detections[indices[k]]);
      clusters.push_back(make_cluster(std::move(members)));
    }
  }
  std::stable_sort(clusters.begin(), clusters.end(), [](const CageCluster& a, const CageCluster& b) {
    if (a.period != b.period) return a.period < b.period;
    if (a.centroid.x != b.centroid.x) return a.centroid.x < b.centroid.x;
    return a.centroid.y < b.centroid.y;
  });
  return clusters;
}

std::vector<Detection> apply_score_threshold(std::span<const Detection> detections, double threshold) {
  std::vector<Detection> out;
  for (const auto& d : detections) {
    if (!d.score || *d.score >= threshold) out.push_back(d);
  }
  return out;
}

std::vector<Detection> cluster_members(std::span<const CageCluster> clusters) {
  std::vector<Detection> out;
  for (const auto& c : clusters) out.insert(out.end(), c.members.begin(), c.members.end());
  return out;
}

}  // namespace cagemap
