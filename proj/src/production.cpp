#include "cagemap/production.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "cagemap/errors.hpp"
#include "cagemap/geodata.hpp"
#include "parallel.hpp"

namespace cagemap {

namespace {

constexpr int kMaxErrorRedraws = 10'000;
constexpr int kMaxAreaAttempts = 100;
constexpr int kMaxHarvestRedraws = 10'000;

std::string cell_name(CageType type, Period period) {
  return std::string(to_string(type)) + "/" + std::string(label(period));
}

// Pairwise summation keeps the reduction independent of how the replicates
// were produced and accurate for long vectors.
double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

}  // namespace

// ---------------------------------------------------------------------------
// Area error

NormalParams AreaErrorModel::at(CageType type, Period period) const {
  if (auto it = cells.find({type, period}); it != cells.end()) return it->second;
  if (auto it = pooled.find(type); it != pooled.end()) return it->second;
  throw ConfigError("no cage area error fit for " + cell_name(type, period));
}

AreaErrorModel AreaErrorModel::exact() {
  AreaErrorModel model;
  model.pooled[CageType::circular] = {0.0, 0.0};
  model.pooled[CageType::square] = {0.0, 0.0};
  return model;
}

NormalParams sample_stats(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("sample statistics of an empty list");
  const auto n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

AreaErrorModel fit_area_errors(std::span<const Detection> predictions, std::span<const Detection> annotations) {
  std::unordered_map<std::string, std::vector<std::size_t>> by_image;
  for (std::size_t j = 0; j < annotations.size(); ++j) {
    by_image[annotations[j].image_id + '\x1f' + std::to_string(annotations[j].year)].push_back(j);
  }
  std::map<std::pair<CageType, Period>, std::vector<double>> residuals;
  std::map<CageType, std::vector<double>> pooled;
  std::set<CageType> predicted_types;
  for (const auto& p : predictions) {
    if (p.cage_type == CageType::other) continue;
    predicted_types.insert(p.cage_type);
    auto it = by_image.find(p.image_id + '\x1f' + std::to_string(p.year));
    if (it == by_image.end()) continue;
    const Detection* best = nullptr;
    double best_overlap = 0.0;
    for (std::size_t j : it->second) {
      const auto& a = annotations[j];
      if (a.cage_type != p.cage_type) continue;
      const double o = overlap_area(p.box, a.box);
      if (o > best_overlap) {
        best_overlap = o;
        best = &a;
      }
    }
    if (!best) continue;
    const double r = detection_area(*best).estimate - detection_area(p).estimate;
    residuals[{p.cage_type, p.period}].push_back(r);
    pooled[p.cage_type].push_back(r);
  }

  AreaErrorModel model;
  for (CageType type : predicted_types) {
    auto it = pooled.find(type);
    if (it == pooled.end()) {
      throw ConfigError("no matched prediction/annotation pair for cage type " + std::string(to_string(type)));
    }
    model.pooled[type] = sample_stats(it->second);
  }
  for (const auto& [cell, values] : residuals) {
    model.pair_counts[cell] = values.size();
    if (values.size() >= 2) model.cells[cell] = sample_stats(values);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Cluster area

ClusterAreaPlan plan_cluster_area(const CageCluster& cluster, const AreaErrorModel& errors,
                                  const TileIndexer& locations) {
  ClusterAreaPlan plan;
  // location -> year -> cage indices
  std::map<TileKey, std::map<int, std::vector<std::size_t>>> groups;
  for (const auto& m : cluster.members) {
    if (m.cage_type == CageType::other) {
      ++plan.other_cages;
      continue;
    }
    PlannedCage cage;
    cage.id = m.id;
    cage.type = m.cage_type;
    cage.period = m.period;
    cage.bounds = detection_area(m);
    cage.error = errors.at(m.cage_type, m.period);
    groups[locations.key_of(m.box.centroid())][m.year].push_back(plan.cages.size());
    plan.cages.push_back(std::move(cage));
  }
  for (const auto& [location, years] : groups) {
    const std::vector<std::size_t>* largest = nullptr;
    const std::vector<std::size_t>* smallest = nullptr;
    double largest_sum = 0.0;
    double smallest_sum = 0.0;
    // Years ascend, so strict comparisons keep the earliest year on ties.
    for (const auto& [year, idx] : years) {
      double sum = 0.0;
      for (std::size_t i : idx) sum += plan.cages[i].bounds.estimate;
      if (!largest || sum > largest_sum) {
        largest = &idx;
        largest_sum = sum;
      }
      if (!smallest || sum < smallest_sum) {
        smallest = &idx;
        smallest_sum = sum;
      }
    }
    plan.max_scheme.insert(plan.max_scheme.end(), largest->begin(), largest->end());
    plan.min_scheme.insert(plan.min_scheme.end(), smallest->begin(), smallest->end());
  }
  return plan;
}

AreaDraw sample_cluster_area(const ClusterAreaPlan& plan, Rng& rng) {
  if (plan.cages.empty()) return {};
  std::vector<double> factor(plan.cages.size());
  for (int attempt = 0; attempt < kMaxAreaAttempts; ++attempt) {
    for (std::size_t i = 0; i < plan.cages.size(); ++i) {
      const auto& cage = plan.cages[i];
      const double a = cage.bounds.estimate;
      double adjusted = 0.0;
      int draws = 0;
      do {
        if (++draws > kMaxErrorRedraws) {
          throw InvariantError("cage " + cage.id + ": area error keeps the adjusted area non-positive");
        }
        adjusted = a + sample_normal(rng, cage.error.mean, cage.error.sd);
      } while (!(adjusted > 0.0));
      factor[i] = adjusted / a;
    }
    AreaDraw draw;
    for (std::size_t i : plan.min_scheme) draw.lower += plan.cages[i].bounds.min_area * factor[i];
    for (std::size_t i : plan.max_scheme) draw.upper += plan.cages[i].bounds.max_area * factor[i];
    if (draw.lower > draw.upper) continue;
    draw.value = rng.uniform(draw.lower, draw.upper);
    return draw;
  }
  throw InvariantError("cluster area lower bound exceeds the upper bound after " +
                       std::to_string(kMaxAreaAttempts) + " attempts");
}

// ---------------------------------------------------------------------------
// Depth

void DepthConfig::validate() const {
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw ConfigError("depth mixture weight kappa must lie in [0, 1]");
  if (!(floor_m > 0.0) || !std::isfinite(floor_m)) throw ConfigError("depth floor must be positive");
  if (!(fallback_m >= floor_m) || !std::isfinite(fallback_m)) {
    throw ConfigError("fallback depth must be at least the depth floor");
  }
  if (!(sd_scale >= 0.0) || !std::isfinite(sd_scale)) throw ConfigError("depth sd scale must be non-negative");
}

double depth_estimate(std::optional<double> water_depth, const DepthConfig& config) {
  if (!water_depth) return config.fallback_m;
  return std::max(*water_depth / 2.0, config.floor_m);
}

DepthDistribution::DepthDistribution(double d_hat, const DepthConfig& config)
    : d_hat_(d_hat),
      kappa_(config.kappa),
      left_(d_hat, config.sd_scale * (d_hat - config.floor_m) / 1.96, config.floor_m, d_hat),
      right_(d_hat, config.sd_scale * d_hat / 1.96, d_hat, 2.0 * d_hat) {}

double DepthDistribution::sample(Rng& rng) const {
  const bool use_left = rng.uniform() < kappa_;
  return use_left ? left_.sample(rng) : right_.sample(rng);
}

double DepthDistribution::cdf(double x) const noexcept {
  return kappa_ * left_.cdf(x) + (1.0 - kappa_) * right_.cdf(x);
}

double sample_depth(std::optional<double> water_depth, const DepthConfig& config, Rng& rng) {
  return DepthDistribution(depth_estimate(water_depth, config), config).sample(rng);
}

// ---------------------------------------------------------------------------
// Stocking and harvest

std::vector<SpeciesParams> reference_species() {
  return {
      {"meagre", 15.00, 1.44, 0.67, 0.14},
      {"sea_bass", 20.00, 4.33, 0.60, 0.20},
      {"sea_bream", 12.50, 4.33, 0.67, 0.20},
  };
}

PeriodFactors species_weighted_params(std::span<const SpeciesParams> species,
                                      const std::map<std::string, double>& shares) {
  double total = 0.0;
  PeriodFactors out;
  double stocking_var = 0.0;
  double harvest_var = 0.0;
  for (const auto& [name, w] : shares) {
    auto it = std::find_if(species.begin(), species.end(), [&](const SpeciesParams& s) { return s.name == name; });
    if (it == species.end()) throw ArgumentError("production share for unknown species " + name);
    if (!(w >= 0.0) || !std::isfinite(w)) throw ArgumentError("share of " + name + " must be non-negative");
    if (it->stocking_sd < 0.0 || it->harvest_sd < 0.0) throw ArgumentError("species " + name + " has a negative sd");
    total += w;
    out.stocking.mean += w * it->stocking_mean;
    out.harvest.mean += w * it->harvest_mean;
    stocking_var += w * w * it->stocking_sd * it->stocking_sd;
    harvest_var += w * w * it->harvest_sd * it->harvest_sd;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "production shares sum to " << total << ", expected 1";
    throw ArgumentError(os.str());
  }
  out.stocking.sd = std::sqrt(stocking_var);
  out.harvest.sd = std::sqrt(harvest_var);
  return out;
}

double sample_harvest(const NormalParams& harvest, Rng& rng) {
  for (int i = 0; i < kMaxHarvestRedraws; ++i) {
    const double h = sample_normal(rng, harvest.mean, harvest.sd);
    if (h > 0.0) return h;
  }
  throw InvariantError("harvest frequency draws keep falling at or below zero");
}

// ---------------------------------------------------------------------------
// Bootstrap

void FactorModel::validate() const {
  depth.validate();
  if (!std::isfinite(stocking_lower) || !std::isfinite(stocking_upper) || !(stocking_lower < stocking_upper)) {
    throw ConfigError("stocking density bounds need a < b");
  }
  for (const auto& [period, f] : periods) {
    const std::string name(label(period));
    if (!std::isfinite(f.stocking.mean) || !(f.stocking.sd >= 0.0)) {
      throw ConfigError("invalid stocking density parameters for " + name);
    }
    if (!(f.harvest.mean > 0.0) || !std::isfinite(f.harvest.mean) || !(f.harvest.sd >= 0.0)) {
      throw ConfigError("invalid harvest frequency parameters for " + name);
    }
  }
}

NormalParams summarize(std::span<const double> replicates) {
  if (replicates.empty()) throw ArgumentError("summary of an empty replicate vector");
  const std::size_t n = replicates.size();
  const double x0 = replicates.front();
  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = replicates[i] - x0;
  const double dbar = pairwise_sum(dev.data(), n) / static_cast<double>(n);
  if (n < 2) return {x0 + dbar, 0.0};
  for (auto& d : dev) d = (d - dbar) * (d - dbar);
  return {x0 + dbar, std::sqrt(pairwise_sum(dev.data(), n) / static_cast<double>(n - 1))};
}

BootstrapResult bootstrap_tonnage(std::span<const CageCluster> clusters, const BathymetrySampler* bathymetry,
                                  const FactorModel& factors, const BootstrapOptions& options) {
  if (options.replicates < 1) throw ArgumentError("bootstrap needs at least one replicate");
  factors.validate();

  struct Prepared {
    ClusterAreaPlan plan;
    DepthDistribution depth;
    TruncatedNormal stocking;
    NormalParams harvest;
    std::size_t period_slot;
  };

  BootstrapResult result;
  result.replicates = options.replicates;
  std::map<Period, std::size_t> slot_of;
  for (const auto& [period, f] : factors.periods) {
    slot_of[period] = result.periods.size();
    TonnageEstimate e;
    e.period = period;
    e.replicates.assign(options.replicates, 0.0);
    result.periods.push_back(std::move(e));
  }

  std::vector<Prepared> prepared;
  prepared.reserve(clusters.size());
  for (const auto& c : clusters) {
    auto slot = slot_of.find(c.period);
    if (slot == slot_of.end()) {
      throw ConfigError("no production factors configured for period " + std::string(label(c.period)));
    }
    const PeriodFactors& pf = factors.periods.at(c.period);
    ClusterTonnage ct;
    ct.period = c.period;
    ct.centroid = c.centroid;
    ct.location = options.locations.key_of(c.centroid);
    if (bathymetry) ct.water_depth = max_depth_at(c, *bathymetry);
    ct.d_hat = depth_estimate(ct.water_depth, factors.depth);
    ct.replicates.assign(options.replicates, 0.0);
    prepared.push_back({plan_cluster_area(c, factors.area_errors, options.locations),
                        DepthDistribution(ct.d_hat, factors.depth),
                        TruncatedNormal(pf.stocking.mean, pf.stocking.sd, factors.stocking_lower,
                                        factors.stocking_upper),
                        pf.harvest, slot->second});
    auto& est = result.periods[slot->second];
    ++est.clusters;
    est.other_cages += prepared.back().plan.other_cages;
    result.clusters.push_back(std::move(ct));
  }

  detail::parallel_for(options.replicates, options.workers, [&](std::size_t r) {
    Rng rng = Rng::substream(options.seed, streams::kBootstrap, r);
    for (std::size_t i = 0; i < prepared.size(); ++i) {
      const auto& p = prepared[i];
      const double a = sample_cluster_area(p.plan, rng).value;
      const double d = p.depth.sample(rng);
      const double s = p.stocking.sample(rng);
      const double h = sample_harvest(p.harvest, rng);
      result.clusters[i].replicates[r] = a * d * s * h / 1000.0;
    }
  });

  // Period totals summed in cluster input order.
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    auto& totals = result.periods[prepared[i].period_slot].replicates;
    const auto& y = result.clusters[i].replicates;
    for (std::size_t r = 0; r < options.replicates; ++r) totals[r] += y[r];
  }
  for (auto& e : result.periods) {
    const NormalParams s = summarize(e.replicates);
    e.mean = s.mean;
    e.sd = s.sd;
    e.imputed_replicates = e.replicates;
    e.imputed_mean = e.mean;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Imputation

std::vector<ImputationRule> default_imputation_rules() {
  return {{Period::p2000_2004, Period::p2005_2009},
          {Period::p2013_2015, Period::p2010_2012},
          {Period::p2016_2018, Period::p2010_2012}};
}

ImputationResult impute_missing(const BootstrapResult& bootstrap, const CoverageMap& coverage,
                                std::span<const ImputationRule> rules) {
  ImputationResult out;
  out.estimates = bootstrap.periods;
  for (auto& e : out.estimates) {
    if (e.imputed_replicates.size() != e.replicates.size()) e.imputed_replicates = e.replicates;
  }
  auto find_estimate = [&](Period p) -> TonnageEstimate* {
    for (auto& e : out.estimates) {
      if (e.period == p) return &e;
    }
    return nullptr;
  };
  static const std::set<TileKey> kNone;
  auto missing_in = [&](Period p) -> const std::set<TileKey>& {
    auto it = coverage.missing.find(p);
    return it == coverage.missing.end() ? kNone : it->second;
  };

  for (const auto& rule : rules) {
    const auto& missing = missing_in(rule.target);
    if (missing.empty()) continue;
    TonnageEstimate* target = find_estimate(rule.target);
    if (!target) {
      throw ConfigError("imputation target period " + std::string(label(rule.target)) + " has no estimate");
    }
    target->donor = rule.donor;
    const auto& donor_missing = missing_in(rule.donor);
    for (const TileKey& tile : missing) {
      if (donor_missing.contains(tile)) {
        out.skipped.push_back({rule.target, rule.donor, tile});
        continue;
      }
      for (const auto& c : bootstrap.clusters) {
        if (c.period != rule.donor || c.location != tile) continue;
        for (std::size_t r = 0; r < c.replicates.size(); ++r) target->imputed_replicates[r] += c.replicates[r];
      }
    }
  }
  for (auto& e : out.estimates) {
    if (!e.imputed_replicates.empty()) e.imputed_mean = summarize(e.imputed_replicates).mean;
  }
  return out;
}

// ---------------------------------------------------------------------------
// FAO comparison

std::vector<FaoComparisonRow> compare_fao(std::span<const TonnageEstimate> estimates,
                                          const std::map<int, double>& fao_series, const PeriodMap& periods) {
  std::vector<FaoComparisonRow> rows;
  for (const auto& e : estimates) {
    FaoComparisonRow row;
    row.period = e.period;
    row.model_mean = e.mean;
    row.model_sd = e.sd;
    row.imputed_mean = e.imputed_mean;
    std::vector<double> values;
    for (const auto& [year, tonnes] : fao_series) {
      if (auto p = periods.find(year); p && *p == e.period) values.push_back(tonnes);
    }
    row.fao_years = values.size();
    if (!values.empty()) {
      const NormalParams s = sample_stats(values);
      row.fao_mean = s.mean;
      row.fao_sd = s.sd;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace cagemap
