#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cagemap/types.hpp"

namespace cagemap {

/// Connected components of the fixed-radius graph over `points`: i and j are
/// linked when their Euclidean distance is <= `distance`. Components are lists
/// of indices in ascending order, sorted by their smallest index.
std::vector<std::vector<std::size_t>> radius_components(std::span<const Point> points, double distance);

/// Groups detections into cage clusters.
///
/// Nodes are box centroids, edges join centroids within `distance_threshold`
/// (ties connect), and each period is clustered on its own. Components smaller
/// than `min_cluster_size` are dropped. Output is ordered by
/// (period, centroid x, centroid y); members keep their input order.
std::vector<CageCluster> cluster_detections(std::span<const Detection> detections,
                                            double distance_threshold,
                                            std::size_t min_cluster_size);

/// Builds a cluster from members that share one period.
CageCluster make_cluster(std::vector<Detection> members);

GeoRect union_bbox(std::span<const Detection> members);
GeoRect union_bbox(const CageCluster& cluster);

/// Detections with a score at or above `threshold`; annotations (no score) pass.
std::vector<Detection> apply_score_threshold(std::span<const Detection> detections, double threshold);

/// Flattens clusters back to their member detections.
std::vector<Detection> cluster_members(std::span<const CageCluster> clusters);

}  // namespace cagemap
