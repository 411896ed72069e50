#include "cagemap/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "cagemap/clustering.hpp"
#include "cagemap/errors.hpp"
#include "cagemap/evaluation.hpp"
#include "cagemap/rng.hpp"
#include "parallel.hpp"

namespace cagemap {

ParamGrid ParamGrid::standard() {
  ParamGrid grid;
  for (int i = 0; i <= 80; ++i) grid.score_thresholds.push_back(static_cast<double>(600 + 5 * i) / 1000.0);
  for (int d = 10; d <= 150; d += 20) grid.distance_thresholds.push_back(d);
  for (std::size_t m = 1; m <= 10; ++m) grid.min_cluster_sizes.push_back(m);
  return grid;
}

void ParamGrid::validate() const {
  if (score_thresholds.empty() || distance_thresholds.empty() || min_cluster_sizes.empty()) {
    throw ArgumentError("parameter grid has an empty set");
  }
  for (double s : score_thresholds) {
    if (!(s >= 0.0 && s <= 1.0)) throw ArgumentError("score thresholds must lie in [0, 1]");
  }
  for (double d : distance_thresholds) {
    if (!(d > 0.0) || !std::isfinite(d)) throw ArgumentError("distance thresholds must be positive");
  }
  for (std::size_t m : min_cluster_sizes) {
    if (m < 1) throw ArgumentError("minimum cluster sizes must be at least 1");
  }
}

std::size_t ParamGrid::size() const noexcept {
  return score_thresholds.size() * distance_thresholds.size() * min_cluster_sizes.size();
}

std::string_view to_string(Objective objective) noexcept {
  return objective == Objective::product ? "product" : "f1";
}

Objective parse_objective(std::string_view text) {
  if (text == "product") return Objective::product;
  if (text == "f1") return Objective::f1;
  throw ArgumentError("unknown objective '" + std::string(text) + "' (expected product or f1)");
}

std::vector<std::vector<std::string>> kfold_split(std::vector<std::string> images, std::size_t k,
                                                  std::uint64_t seed) {
  std::sort(images.begin(), images.end());
  images.erase(std::unique(images.begin(), images.end()), images.end());
  if (k < 2) throw ArgumentError("k-fold split needs k >= 2");
  if (images.size() < k) {
    throw ArgumentError("cannot split " + std::to_string(images.size()) + " images into " + std::to_string(k) +
                        " folds");
  }
  Rng rng = Rng::substream(seed, streams::kFolds, 0);
  for (std::size_t i = images.size(); i > 1; --i) std::swap(images[i - 1], images[rng.below(i)]);

  std::vector<std::vector<std::string>> folds(k);
  const std::size_t base = images.size() / k;
  const std::size_t extra = images.size() % k;
  std::size_t at = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t n = base + (f < extra ? 1 : 0);
    folds[f].assign(images.begin() + static_cast<std::ptrdiff_t>(at),
                    images.begin() + static_cast<std::ptrdiff_t>(at + n));
    std::sort(folds[f].begin(), folds[f].end());
    at += n;
  }
  return folds;
}

bool preferred_on_tie(const Combination& a, const Combination& b) noexcept {
  if (a.score_threshold != b.score_threshold) return a.score_threshold > b.score_threshold;
  if (a.min_cluster_size != b.min_cluster_size) return a.min_cluster_size < b.min_cluster_size;
  return a.distance < b.distance;
}

namespace {

void finish(FoldMetrics& m, std::size_t tp_predictions, std::size_t tp_labels) {
  m.precision = m.predictions == 0 ? 0.0 : static_cast<double>(tp_predictions) / static_cast<double>(m.predictions);
  m.recall = m.labels == 0 ? 0.0 : static_cast<double>(tp_labels) / static_cast<double>(m.labels);
  m.product = m.precision * m.recall;
  const double sum = m.precision + m.recall;
  m.f1 = sum > 0.0 ? 2.0 * m.precision * m.recall / sum : 0.0;
}

// Everything about one fold that does not depend on the parameters.
struct FoldData {
  std::vector<Detection> predictions;
  std::vector<bool> tp;                               // per prediction
  std::vector<std::vector<std::size_t>> overlapping;  // per prediction: label indices
  std::size_t labels = 0;
};

FoldData prepare_fold(std::vector<Detection> predictions, std::span<const Detection> labels) {
  FoldData fold;
  fold.labels = labels.size();
  fold.overlapping.resize(predictions.size());
  std::unordered_map<std::string, std::vector<std::size_t>> by_image;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    by_image[labels[j].image_id + '\x1f' + std::to_string(labels[j].year)].push_back(j);
  }
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto it = by_image.find(predictions[i].image_id + '\x1f' + std::to_string(predictions[i].year));
    if (it == by_image.end()) continue;
    for (std::size_t j : it->second) {
      if (overlaps_interior(predictions[i].box, labels[j].box)) fold.overlapping[i].push_back(j);
    }
  }
  fold.tp.resize(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) fold.tp[i] = !fold.overlapping[i].empty();
  fold.predictions = std::move(predictions);
  return fold;
}

// Component size of each surviving prediction under one distance, clustering
// each period separately.
std::vector<std::size_t> component_sizes(const FoldData& fold, const std::vector<std::size_t>& survivors,
                                         double distance) {
  std::vector<std::size_t> size_of(fold.predictions.size(), 0);
  std::map<Period, std::vector<std::size_t>> by_period;
  for (std::size_t i : survivors) by_period[fold.predictions[i].period].push_back(i);
  for (const auto& [period, idx] : by_period) {
    std::vector<Point> centroids;
    centroids.reserve(idx.size());
    for (std::size_t i : idx) centroids.push_back(fold.predictions[i].box.centroid());
    for (const auto& comp : radius_components(centroids, distance)) {
      for (std::size_t k : comp) size_of[idx[k]] = comp.size();
    }
  }
  return size_of;
}

}  // namespace

FoldMetrics evaluate_fold(std::span<const Detection> detections, std::span<const Detection> labels,
                          const Combination& params) {
  const auto filtered = apply_score_threshold(detections, params.score_threshold);
  const auto clusters = cluster_detections(filtered, params.distance, params.min_cluster_size);
  const auto kept = cluster_members(clusters);
  const MatchResult match = match_tp(kept, labels);
  FoldMetrics m;
  m.predictions = kept.size();
  m.labels = labels.size();
  finish(m, match.tp_predictions(), match.tp_labels());
  return m;
}

TuningResult grid_search(std::span<const Detection> detections, std::span<const Detection> labels,
                         const ParamGrid& grid, std::size_t k, Objective objective, std::uint64_t seed,
                         unsigned workers) {
  grid.validate();
  std::set<std::string> image_set;
  for (const auto& d : detections) image_set.insert(d.image_id);
  for (const auto& l : labels) image_set.insert(l.image_id);
  const auto folds = kfold_split({image_set.begin(), image_set.end()}, k, seed);

  std::unordered_map<std::string, std::size_t> fold_of;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (const auto& id : folds[f]) fold_of[id] = f;
  }
  std::vector<std::vector<Detection>> fold_preds(k);
  std::vector<std::vector<Detection>> fold_labels(k);
  for (const auto& d : detections) fold_preds[fold_of.at(d.image_id)].push_back(d);
  for (const auto& l : labels) fold_labels[fold_of.at(l.image_id)].push_back(l);

  std::vector<FoldData> data;
  data.reserve(k);
  for (std::size_t f = 0; f < k; ++f) data.push_back(prepare_fold(std::move(fold_preds[f]), fold_labels[f]));

  const std::size_t n_score = grid.score_thresholds.size();
  const std::size_t n_dist = grid.distance_thresholds.size();
  const std::size_t n_min = grid.min_cluster_sizes.size();
  auto slot = [&](std::size_t s, std::size_t d, std::size_t m) { return (s * n_dist + d) * n_min + m; };

  TuningResult result;
  result.objective = objective;
  result.folds = k;
  result.table.resize(grid.size());
  for (std::size_t s = 0; s < n_score; ++s) {
    for (std::size_t d = 0; d < n_dist; ++d) {
      for (std::size_t m = 0; m < n_min; ++m) {
        auto& row = result.table[slot(s, d, m)];
        row.params = {grid.score_thresholds[s], grid.distance_thresholds[d], grid.min_cluster_sizes[m]};
        row.folds.resize(k);
      }
    }
  }

  // One task per (fold, score threshold): cluster once per distance, then read
  // every min size off the component sizes.
  detail::parallel_for(k * n_score, workers, [&](std::size_t task) {
    const std::size_t f = task / n_score;
    const std::size_t s = task % n_score;
    const FoldData& fold = data[f];
    std::vector<std::size_t> survivors;
    for (std::size_t i = 0; i < fold.predictions.size(); ++i) {
      const auto& score = fold.predictions[i].score;
      if (!score || *score >= grid.score_thresholds[s]) survivors.push_back(i);
    }
    for (std::size_t d = 0; d < n_dist; ++d) {
      const auto size_of = component_sizes(fold, survivors, grid.distance_thresholds[d]);
      std::vector<std::size_t> label_best(fold.labels, 0);
      for (std::size_t i : survivors) {
        for (std::size_t j : fold.overlapping[i]) label_best[j] = std::max(label_best[j], size_of[i]);
      }
      for (std::size_t m = 0; m < n_min; ++m) {
        const std::size_t min_size = grid.min_cluster_sizes[m];
        FoldMetrics fm;
        fm.fold = f;
        fm.labels = fold.labels;
        std::size_t tp_pred = 0;
        for (std::size_t i : survivors) {
          if (size_of[i] >= min_size) {
            ++fm.predictions;
            if (fold.tp[i]) ++tp_pred;
          }
        }
        const auto tp_lab = static_cast<std::size_t>(
            std::count_if(label_best.begin(), label_best.end(), [&](std::size_t b) { return b >= min_size; }));
        finish(fm, tp_pred, tp_lab);
        result.table[slot(s, d, m)].folds[f] = fm;
      }
    }
  });

  for (auto& row : result.table) {
    double product = 0.0;
    double f1 = 0.0;
    for (const auto& fm : row.folds) {
      product += fm.product;
      f1 += fm.f1;
    }
    row.mean_product = product / static_cast<double>(k);
    row.mean_f1 = f1 / static_cast<double>(k);
  }

  auto argmax = [&](Objective obj) {
    const CombinationResult* best = &result.table.front();
    for (const auto& row : result.table) {
      const double a = row.mean(obj);
      const double b = best->mean(obj);
      if (a > b || (a == b && preferred_on_tie(row.params, best->params))) best = &row;
    }
    return best->params;
  };
  result.best_product = argmax(Objective::product);
  result.best_f1 = argmax(Objective::f1);
  result.best = objective == Objective::product ? result.best_product : result.best_f1;
  return result;
}

}  // namespace cagemap
