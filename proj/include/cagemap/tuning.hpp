#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cagemap/types.hpp"

namespace cagemap {

/// Candidate post-processing parameters.
struct ParamGrid {
  std::vector<double> score_thresholds;
  std::vector<double> distance_thresholds;
  std::vector<std::size_t> min_cluster_sizes;

  /// {0.600, 0.605, ..., 1.000} x {10, 30, ..., 150} x {1, ..., 10}.
  static ParamGrid standard();
  /// Throws ArgumentError when a set is empty or a value is out of range.
  void validate() const;
  std::size_t size() const noexcept;
};

struct Combination {
  double score_threshold = 0.0;
  double distance = 0.0;
  std::size_t min_cluster_size = 1;

  friend bool operator==(const Combination&, const Combination&) = default;
};

enum class Objective { product, f1 };

std::string_view to_string(Objective objective) noexcept;
Objective parse_objective(std::string_view text);

struct FoldMetrics {
  std::size_t fold = 0;
  std::size_t predictions = 0;
  std::size_t labels = 0;
  double precision = 0.0;
  double recall = 0.0;
  double product = 0.0;
  double f1 = 0.0;
};

struct CombinationResult {
  Combination params;
  std::vector<FoldMetrics> folds;
  double mean_product = 0.0;
  double mean_f1 = 0.0;

  double mean(Objective objective) const noexcept {
    return objective == Objective::product ? mean_product : mean_f1;
  }
};

struct TuningResult {
  Objective objective = Objective::product;
  std::size_t folds = 0;
  Combination best;          // argmax of the requested objective
  Combination best_product;
  Combination best_f1;
  std::vector<CombinationResult> table;  // grid order: score, distance, min size
};

/// Partitions image ids into k folds of near-equal size (sizes differ by at
/// most one, larger folds first). The ids are sorted before shuffling, so the
/// split depends only on the id set and the seed.
std::vector<std::vector<std::string>> kfold_split(std::vector<std::string> images, std::size_t k,
                                                  std::uint64_t seed);

/// True when `a` should win a tie against `b`: higher score threshold, then
/// smaller min cluster size, then smaller distance.
bool preferred_on_tie(const Combination& a, const Combination& b) noexcept;

/// Cage-level precision/recall of one fold after score filtering and clustering.
/// Precision is 0 when nothing survives; recall is 0 for a fold without labels.
FoldMetrics evaluate_fold(std::span<const Detection> detections, std::span<const Detection> labels,
                          const Combination& params);

/// k-fold grid search. Each fold is post-processed with every combination and
/// scored against its own labels; the combination with the largest mean
/// objective across folds wins, ties resolved by `preferred_on_tie`.
TuningResult grid_search(std::span<const Detection> detections, std::span<const Detection> labels,
                         const ParamGrid& grid, std::size_t k, Objective objective,
                         std::uint64_t seed, unsigned workers = 1);

}  // namespace cagemap
