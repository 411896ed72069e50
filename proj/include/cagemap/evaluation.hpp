#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cagemap/types.hpp"

namespace cagemap {

enum class EvalLevel { cage, cluster };

std::string_view to_string(EvalLevel level) noexcept;

/// Indicator true-positive flags. A prediction is a TP when its box overlaps at
/// least one label from the same image, and symmetrically for labels.
struct MatchResult {
  EvalLevel level = EvalLevel::cage;
  std::vector<bool> prediction_tp;
  std::vector<bool> label_tp;
  // Items overlapping two or more counterparts; the indicator counts them once.
  std::size_t predictions_multi_matched = 0;
  std::size_t labels_multi_matched = 0;

  std::size_t tp_predictions() const noexcept;
  std::size_t tp_labels() const noexcept;
};

/// Cage-level matching. Overlap means positive-area interior intersection and
/// only boxes with the same image_id and year are compared.
MatchResult match_tp(std::span<const Detection> predictions, std::span<const Detection> labels);

/// Cluster-level matching on union boxes. A prediction cluster and a label
/// cluster are compared when they share at least one (image_id, year) among
/// their members.
MatchResult match_clusters(std::span<const CageCluster> predictions,
                           std::span<const CageCluster> labels);

/// TP predictions over predictions; UndefinedMetricError with no predictions.
double precision(const MatchResult& match);
/// TP labels over labels; UndefinedMetricError with no labels.
double recall(const MatchResult& match);

/// One stratum of the image population.
struct StratumSpec {
  std::string name;
  std::size_t population_size = 0;
  std::size_t sampled_size = 0;
  std::string predicate;

  /// population / sampled; 0 when nothing was sampled.
  double expansion() const noexcept;
};

/// Labels found (and matched) in the sampled images of one stratum.
struct StratumCounts {
  std::string stratum;
  std::size_t labels = 0;
  std::size_t matched = 0;
};

struct StratumRecallTerm {
  std::string stratum;
  std::size_t labels = 0;
  std::size_t matched = 0;
  double estimated_labels = 0.0;  // labels scaled to the stratum population
  double recall = 0.0;            // 0 for strata without labels
  double weight = 0.0;
};

struct StratifiedRecall {
  double recall = 0.0;
  std::vector<StratumRecallTerm> terms;
};

/// Label-weighted recall across strata.
///
/// Each stratum's label count is scaled by population/sampled, and the
/// estimate is sum(weight_s * recall_s) with weight_s = labels_s / labels. It
/// is evaluated as sum(matched_s * e_s) / sum(labels_s * e_s), which reduces
/// to plain recall, bit for bit, when every stratum is fully sampled. Strata
/// without labels carry zero weight.
StratifiedRecall stratified_recall(std::span<const StratumCounts> counts,
                                   std::span<const StratumSpec> strata);

/// Tallies labels and matched labels per stratum given an image -> stratum map.
/// Labels on images absent from the map raise ConfigError.
std::vector<StratumCounts> count_by_stratum(const MatchResult& match,
                                            std::span<const Detection> labels,
                                            const std::map<std::string, std::string>& image_stratum);

/// How the bound proportion is read off the simulated zero-fraction curve.
enum class BoundRule {
  largest_accepted,   // largest p whose zero-fraction is >= target
  smallest_rejected,  // smallest p whose zero-fraction falls below target
};

struct UpperBoundParams {
  std::uint64_t sample_size = 0;     // m
  std::uint64_t stratum_size = 0;    // images in the stratum
  double cages_per_image = 5.0;      // k
  std::uint64_t trials = 10'000;
  double target_prob = 0.5;
  std::vector<double> grid;          // ascending proportions
  std::uint64_t seed = 0;
  BoundRule rule = BoundRule::largest_accepted;
  unsigned workers = 1;
};

struct ZeroFractionPoint {
  double p = 0.0;
  double zero_fraction = 0.0;
};

struct UpperBoundResult {
  bool found = false;       // false when no grid point satisfies the rule
  double p_star = 0.0;
  double zero_fraction = 0.0;
  double unrounded = 0.0;   // p_star * stratum_size * k
  std::int64_t bound = 0;   // nearest integer
  std::vector<ZeroFractionPoint> curve;
};

/// Simulates `trials` Binomial(m, p) draws per grid proportion and reports the
/// bound on cages hidden in an unsampled stratum. Grid point i uses its own
/// seeded substream, so the result does not depend on `workers`.
UpperBoundResult upper_bound_population(const UpperBoundParams& params);

/// lo, lo+step, ..., hi (inclusive, each point computed as lo + i*step).
std::vector<double> proportion_grid(double lo, double hi, double step);

/// Precision and recall of one level.
struct LevelMetrics {
  EvalLevel level = EvalLevel::cage;
  std::size_t predictions = 0;
  std::size_t labels = 0;
  std::size_t tp_predictions = 0;
  std::size_t tp_labels = 0;
  double precision = 0.0;
  StratifiedRecall recall;
  std::size_t predictions_multi_matched = 0;
  std::size_t labels_multi_matched = 0;
};

struct EvalReport {
  LevelMetrics cage;
  LevelMetrics cluster;
  std::vector<StratumSpec> strata;
  std::optional<UpperBoundResult> upper_bound;
  std::size_t other_type_predictions = 0;
};

}  // namespace cagemap
