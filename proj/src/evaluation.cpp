#include "cagemap/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "cagemap/distributions.hpp"
#include "cagemap/errors.hpp"
#include "cagemap/rng.hpp"
#include "parallel.hpp"

namespace cagemap {

namespace {

std::string image_key(const std::string& image_id, int year) {
  return image_id + '\x1f' + std::to_string(year);
}

std::size_t count_true(const std::vector<bool>& flags) noexcept {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
}

}  // namespace

std::string_view to_string(EvalLevel level) noexcept { return level == EvalLevel::cage ? "cage" : "cluster"; }

std::size_t MatchResult::tp_predictions() const noexcept { return count_true(prediction_tp); }
std::size_t MatchResult::tp_labels() const noexcept { return count_true(label_tp); }

MatchResult match_tp(std::span<const Detection> predictions, std::span<const Detection> labels) {
  MatchResult out;
  out.level = EvalLevel::cage;
  out.prediction_tp.assign(predictions.size(), false);
  out.label_tp.assign(labels.size(), false);
  std::vector<std::size_t> label_hits(labels.size(), 0);

  std::unordered_map<std::string, std::vector<std::size_t>> labels_by_image;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    labels_by_image[image_key(labels[j].image_id, labels[j].year)].push_back(j);
  }
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto it = labels_by_image.find(image_key(predictions[i].image_id, predictions[i].year));
    if (it == labels_by_image.end()) continue;
    std::size_t hits = 0;
    for (std::size_t j : it->second) {
      if (overlaps_interior(predictions[i].box, labels[j].box)) {
        ++hits;
        ++label_hits[j];
      }
    }
    out.prediction_tp[i] = hits > 0;
    if (hits > 1) ++out.predictions_multi_matched;
  }
  for (std::size_t j = 0; j < labels.size(); ++j) {
    out.label_tp[j] = label_hits[j] > 0;
    if (label_hits[j] > 1) ++out.labels_multi_matched;
  }
  return out;
}

MatchResult match_clusters(std::span<const CageCluster> predictions, std::span<const CageCluster> labels) {
  MatchResult out;
  out.level = EvalLevel::cluster;
  out.prediction_tp.assign(predictions.size(), false);
  out.label_tp.assign(labels.size(), false);
  std::vector<std::size_t> label_hits(labels.size(), 0);

  std::unordered_map<std::string, std::vector<std::size_t>> labels_by_image;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    std::set<std::string> keys;
    for (const auto& m : labels[j].members) keys.insert(image_key(m.image_id, m.year));
    for (const auto& k : keys) labels_by_image[k].push_back(j);
  }
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    std::set<std::size_t> candidates;
    for (const auto& m : predictions[i].members) {
      auto it = labels_by_image.find(image_key(m.image_id, m.year));
      if (it != labels_by_image.end()) candidates.insert(it->second.begin(), it->second.end());
    }
    std::size_t hits = 0;
    for (std::size_t j : candidates) {
      if (overlaps_interior(predictions[i].union_box, labels[j].union_box)) {
        ++hits;
        ++label_hits[j];
      }
    }
    out.prediction_tp[i] = hits > 0;
    if (hits > 1) ++out.predictions_multi_matched;
  }
  for (std::size_t j = 0; j < labels.size(); ++j) {
    out.label_tp[j] = label_hits[j] > 0;
    if (label_hits[j] > 1) ++out.labels_multi_matched;
  }
  return out;
}

double precision(const MatchResult& match) {
  if (match.prediction_tp.empty()) throw UndefinedMetricError("precision is undefined without predictions");
  return static_cast<double>(match.tp_predictions()) / static_cast<double>(match.prediction_tp.size());
}

double recall(const MatchResult& match) {
  if (match.label_tp.empty()) throw UndefinedMetricError("recall is undefined without labels");
  return static_cast<double>(match.tp_labels()) / static_cast<double>(match.label_tp.size());
}

double StratumSpec::expansion() const noexcept {
  if (sampled_size == 0) return 0.0;
  return static_cast<double>(population_size) / static_cast<double>(sampled_size);
}

StratifiedRecall stratified_recall(std::span<const StratumCounts> counts, std::span<const StratumSpec> strata) {
  std::unordered_map<std::string, const StratumSpec*> by_name;
  for (const auto& s : strata) {
    if (s.sampled_size > s.population_size) {
      throw ArgumentError("stratum " + s.name + " samples more images than it holds");
    }
    by_name[s.name] = &s;
  }
  StratifiedRecall out;
  double matched_total = 0.0;
  double label_total = 0.0;
  for (const auto& c : counts) {
    auto it = by_name.find(c.stratum);
    if (it == by_name.end()) throw ConfigError("labels counted for unknown stratum " + c.stratum);
    if (c.matched > c.labels) throw ArgumentError("stratum " + c.stratum + " has more matches than labels");
    StratumRecallTerm term;
    term.stratum = c.stratum;
    term.labels = c.labels;
    term.matched = c.matched;
    if (c.labels > 0) {
      if (it->second->sampled_size == 0) {
        throw ConfigError("stratum " + c.stratum + " has labels but no sampled images");
      }
      const double e = it->second->expansion();
      term.estimated_labels = static_cast<double>(c.labels) * e;
      term.recall = static_cast<double>(c.matched) / static_cast<double>(c.labels);
      matched_total += static_cast<double>(c.matched) * e;
      label_total += term.estimated_labels;
    }
    out.terms.push_back(term);
  }
  if (!(label_total > 0.0)) throw UndefinedMetricError("recall is undefined without labels");
  for (auto& t : out.terms) t.weight = t.estimated_labels / label_total;
  out.recall = matched_total / label_total;
  return out;
}

std::vector<StratumCounts> count_by_stratum(const MatchResult& match, std::span<const Detection> labels,
                                            const std::map<std::string, std::string>& image_stratum) {
  if (match.label_tp.size() != labels.size()) throw ArgumentError("match result does not belong to these labels");
  std::map<std::string, StratumCounts> tally;
  for (const auto& [image, stratum] : image_stratum) tally[stratum].stratum = stratum;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    auto it = image_stratum.find(labels[j].image_id);
    if (it == image_stratum.end()) {
      throw ConfigError("label " + labels[j].id + " is on image " + labels[j].image_id + " which has no stratum");
    }
    auto& c = tally[it->second];
    ++c.labels;
    if (match.label_tp[j]) ++c.matched;
  }
  std::vector<StratumCounts> out;
  for (auto& [name, c] : tally) out.push_back(c);
  return out;
}

std::vector<double> proportion_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !std::isfinite(step) || !std::isfinite(lo) || !std::isfinite(hi) || hi < lo) {
    throw ArgumentError("proportion grid needs lo <= hi and a positive step");
  }
  // Half a step of slack so hi is kept despite rounding in (hi - lo) / step.
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 0.5)) + 1;
  std::vector<double> grid;
  grid.reserve(count);
  for (std::size_t i = 0; i < count; ++i) grid.push_back(lo + static_cast<double>(i) * step);
  return grid;
}

UpperBoundResult upper_bound_population(const UpperBoundParams& params) {
  if (params.grid.empty()) throw ArgumentError("upper bound needs a non-empty proportion grid");
  if (!std::is_sorted(params.grid.begin(), params.grid.end())) {
    throw ArgumentError("proportion grid must be sorted ascending");
  }
  for (double p : params.grid) {
    if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("grid proportions must lie in [0, 1]");
  }
  if (params.sample_size > params.stratum_size) {
    throw ArgumentError("sample size exceeds the stratum size");
  }
  if (params.trials < 1000) throw ArgumentError("upper bound needs at least 1000 trials");
  if (!(params.target_prob > 0.0 && params.target_prob < 1.0)) {
    throw ArgumentError("target probability must lie in (0, 1)");
  }
  if (!(params.cages_per_image >= 0.0) || !std::isfinite(params.cages_per_image)) {
    throw ArgumentError("cages per image must be non-negative");
  }

  UpperBoundResult out;
  out.curve.resize(params.grid.size());
  detail::parallel_for(params.grid.size(), params.workers, [&](std::size_t i) {
    Rng rng = Rng::substream(params.seed, streams::kUpperBound, i);
    std::uint64_t zeros = 0;
    for (std::uint64_t t = 0; t < params.trials; ++t) {
      if (sample_binomial(rng, params.sample_size, params.grid[i]) == 0) ++zeros;
    }
    out.curve[i] = {params.grid[i], static_cast<double>(zeros) / static_cast<double>(params.trials)};
  });

  std::optional<std::size_t> pick;
  if (params.rule == BoundRule::largest_accepted) {
    for (std::size_t i = 0; i < out.curve.size(); ++i) {
      if (out.curve[i].zero_fraction >= params.target_prob) pick = i;
    }
  } else {
    for (std::size_t i = 0; i < out.curve.size(); ++i) {
      if (out.curve[i].zero_fraction < params.target_prob) {
        pick = i;
        break;
      }
    }
  }
  if (pick) {
    out.found = true;
    out.p_star = out.curve[*pick].p;
    out.zero_fraction = out.curve[*pick].zero_fraction;
    out.unrounded = out.p_star * static_cast<double>(params.stratum_size) * params.cages_per_image;
    out.bound = std::llround(out.unrounded);
  }
  return out;
}

}  // namespace cagemap
