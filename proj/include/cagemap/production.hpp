#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cagemap/cage_geometry.hpp"
#include "cagemap/distributions.hpp"
#include "cagemap/geodata.hpp"
#include "cagemap/rng.hpp"
#include "cagemap/types.hpp"

namespace cagemap {

struct NormalParams {
  double mean = 0.0;
  double sd = 0.0;
};

// ---------------------------------------------------------------------------
// Cage area error

/// Per (cage type, period) Normal fit of annotated-minus-predicted cage area.
struct AreaErrorModel {
  std::map<std::pair<CageType, Period>, NormalParams> cells;
  std::map<CageType, NormalParams> pooled;
  std::map<std::pair<CageType, Period>, std::size_t> pair_counts;

  /// Cell fit, else the pooled per-type fit; ConfigError naming the cell when neither exists.
  NormalParams at(CageType type, Period period) const;

  /// Model with zero error for every supported type and period.
  static AreaErrorModel exact();
};

/// Pairs every prediction with the same-type annotation of largest overlap on
/// its image and fits Normal(mean, sd) to the area residuals per cell. Cells
/// with fewer than two pairs fall back to the pooled per-type fit. Throws
/// ConfigError when a predicted type has no matched pair at all.
AreaErrorModel fit_area_errors(std::span<const Detection> predictions,
                               std::span<const Detection> annotations);

/// Sample mean and sample sd (n - 1); sd is 0 for fewer than two values.
NormalParams sample_stats(std::span<const double> values);

// ---------------------------------------------------------------------------
// Image selection and cluster area

enum class SelectionScheme { image_max, image_min };

/// A cage contributing to a cluster's area draw.
struct PlannedCage {
  std::string id;
  CageType type = CageType::circular;
  Period period = Period::p2000_2004;
  AreaBounds bounds;
  NormalParams error;
};

/// Precomputed, replicate-independent part of a cluster's area distribution.
///
/// Members are grouped by location (tile of the member centroid) and image
/// year. For every location the image_max scheme keeps the year with the
/// largest summed area estimate and image_min the smallest; `max_scheme` and
/// `min_scheme` index into `cages`.
struct ClusterAreaPlan {
  std::vector<PlannedCage> cages;
  std::vector<std::size_t> max_scheme;
  std::vector<std::size_t> min_scheme;
  std::size_t other_cages = 0;
};

ClusterAreaPlan plan_cluster_area(const CageCluster& cluster, const AreaErrorModel& errors,
                                  const TileIndexer& locations);

struct AreaDraw {
  double lower = 0.0;  // summed min areas under image_min
  double upper = 0.0;  // summed max areas under image_max
  double value = 0.0;  // Uniform(lower, upper)
};

/// One area draw. Each cage's error is drawn once and shared by both schemes;
/// errors are redrawn until the adjusted area is positive.
AreaDraw sample_cluster_area(const ClusterAreaPlan& plan, Rng& rng);

// ---------------------------------------------------------------------------
// Depth

struct DepthConfig {
  double kappa = 0.5;
  double floor_m = 1.0;
  double fallback_m = 4.84;
  // Multiplier on the (b - a) / 1.96 component spread; 0 gives a point mass.
  double sd_scale = 1.0;

  void validate() const;
};

/// Recommended cage depth: max(z / 2, floor) when water depth z is known,
/// otherwise the fallback.
double depth_estimate(std::optional<double> water_depth, const DepthConfig& config);

/// kappa * TN(d, s_l, floor, d) + (1 - kappa) * TN(d, s_r, d, 2 d), with each
/// component's spread (b - a) / 1.96.
class DepthDistribution {
 public:
  DepthDistribution(double d_hat, const DepthConfig& config);

  double d_hat() const noexcept { return d_hat_; }
  double kappa() const noexcept { return kappa_; }
  double lower() const noexcept { return left_.lower(); }
  double upper() const noexcept { return right_.upper(); }
  const TruncatedNormal& left() const noexcept { return left_; }
  const TruncatedNormal& right() const noexcept { return right_; }

  double sample(Rng& rng) const;
  double cdf(double x) const noexcept;

 private:
  double d_hat_;
  double kappa_;
  TruncatedNormal left_;
  TruncatedNormal right_;
};

double sample_depth(std::optional<double> water_depth, const DepthConfig& config, Rng& rng);

// ---------------------------------------------------------------------------
// Stocking density and harvest frequency

struct SpeciesParams {
  std::string name;
  double stocking_mean = 0.0;
  double stocking_sd = 0.0;
  double harvest_mean = 0.0;
  double harvest_sd = 0.0;
};

/// Literature values for meagre, sea bass and sea bream.
std::vector<SpeciesParams> reference_species();

struct PeriodFactors {
  NormalParams stocking;
  NormalParams harvest;
};

/// Share-weighted mean and sqrt(sum(w^2 var)) for stocking and harvest.
/// Shares must cover only known species and sum to 1 within 1e-9.
PeriodFactors species_weighted_params(std::span<const SpeciesParams> species,
                                      const std::map<std::string, double>& shares);

/// Harvest draw from Normal(mean, sd), redrawn until positive.
double sample_harvest(const NormalParams& harvest, Rng& rng);

// ---------------------------------------------------------------------------
// Bootstrap

struct FactorModel {
  DepthConfig depth;
  double stocking_lower = 5.0;
  double stocking_upper = 20.0;
  std::map<Period, PeriodFactors> periods;
  AreaErrorModel area_errors;

  void validate() const;
};

/// Tonnage of one period: replicate vector plus summary.
struct TonnageEstimate {
  Period period = Period::p2000_2004;
  double mean = 0.0;
  double sd = 0.0;
  std::vector<double> replicates;
  std::size_t clusters = 0;
  std::size_t other_cages = 0;
  // Totals including tonnage imputed from the donor period; equal to the own
  // values until impute_missing runs. The imputed component is the difference.
  double imputed_mean = 0.0;
  std::optional<Period> donor;
  std::vector<double> imputed_replicates;
};

/// Replicate tonnage of one cluster, kept for imputation.
struct ClusterTonnage {
  Period period = Period::p2000_2004;
  TileKey location;
  Point centroid;
  std::optional<double> water_depth;
  double d_hat = 0.0;
  std::vector<double> replicates;
};

struct BootstrapOptions {
  std::size_t replicates = 10'000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  TileIndexer locations;
};

struct BootstrapResult {
  std::size_t replicates = 0;
  std::vector<TonnageEstimate> periods;  // period order
  std::vector<ClusterTonnage> clusters;  // input cluster order
};

/// Y = A * D * S * H / 1000 per cluster and replicate, summed by period.
/// Replicate r uses Rng::substream(seed, kBootstrap, r) and visits clusters in
/// input order, so replicate vectors do not depend on `workers`. Periods with
/// factors but no clusters report zero tonnage; a cluster whose period has no
/// factors raises ConfigError. `bathymetry` may be null (all fallback depths).
BootstrapResult bootstrap_tonnage(std::span<const CageCluster> clusters,
                                  const BathymetrySampler* bathymetry, const FactorModel& factors,
                                  const BootstrapOptions& options);

/// Sample mean and sd of a replicate vector, via pairwise summation of
/// deviations from the first element (identical replicates give sd == 0).
NormalParams summarize(std::span<const double> replicates);

// ---------------------------------------------------------------------------
// Missing imagery

struct ImputationRule {
  Period target;
  Period donor;
};

/// 2000-2004 <- 2005-2009, 2013-2015 <- 2010-2012, 2016-2018 <- 2010-2012.
std::vector<ImputationRule> default_imputation_rules();

/// Tiles lacking imagery, per period.
struct CoverageMap {
  std::map<Period, std::set<TileKey>> missing;
};

struct ImputationSkip {
  Period target;
  Period donor;
  TileKey location;
};

struct ImputationResult {
  std::vector<TonnageEstimate> estimates;
  std::vector<ImputationSkip> skipped;
};

/// For every tile missing in a target period, adds the donor period's cluster
/// tonnage at that tile replicate by replicate. Tiles the donor also lacks are
/// skipped and reported.
ImputationResult impute_missing(const BootstrapResult& bootstrap, const CoverageMap& coverage,
                                std::span<const ImputationRule> rules);

// ---------------------------------------------------------------------------
// FAO comparison

struct FaoComparisonRow {
  Period period = Period::p2000_2004;
  std::size_t fao_years = 0;
  std::optional<double> fao_mean;  // nullopt when no FAO year falls in the period
  std::optional<double> fao_sd;
  double model_mean = 0.0;
  double model_sd = 0.0;
  double imputed_mean = 0.0;
};

std::vector<FaoComparisonRow> compare_fao(std::span<const TonnageEstimate> estimates,
                                          const std::map<int, double>& fao_series,
                                          const PeriodMap& periods);

}  // namespace cagemap
