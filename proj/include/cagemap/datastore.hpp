#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cagemap/evaluation.hpp"
#include "cagemap/geodata.hpp"
#include "cagemap/production.hpp"
#include "cagemap/tuning.hpp"
#include "cagemap/types.hpp"

namespace cagemap {

using Json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Detections / annotations (GeoJSON FeatureCollection of rectangles)

struct DetectionFile {
  std::string crs;  // empty when the file does not declare one
  std::vector<Detection> detections;
};

/// Parses and validates every feature; all-or-nothing. Violations raise a
/// ValidationError that lists each offending feature with its id and line.
DetectionFile parse_detections(const std::string& text, const PeriodMap& periods = PeriodMap::standard());
DetectionFile read_detection_file(const fs::path& path, const PeriodMap& periods = PeriodMap::standard());
std::vector<Detection> load_detections(const fs::path& path, const PeriodMap& periods = PeriodMap::standard());

Json detections_to_geojson(std::span<const Detection> detections, const std::string& crs = {});
void save_detections(const fs::path& path, std::span<const Detection> detections, const std::string& crs = {});

// ---------------------------------------------------------------------------
// Land mask and bathymetry

LandMask land_mask_from_geojson(const Json& doc);
LandMask load_land_mask(const fs::path& path);

/// ESRI ASCII grid. `negate` flips elevation rasters (negative below sea level)
/// into positive-down depths.
BathymetrySampler parse_esri_ascii(std::istream& in, bool negate = false);
BathymetrySampler load_bathymetry(const fs::path& path, bool negate = false);

// ---------------------------------------------------------------------------
// Tables

/// name,population_size,sampled_size,predicate
std::vector<StratumSpec> parse_strata_csv(std::istream& in);
std::vector<StratumSpec> load_strata(const fs::path& path);
void save_strata(const fs::path& path, std::span<const StratumSpec> strata);

/// year,tonnes
std::map<int, double> parse_fao_csv(std::istream& in);
std::map<int, double> load_fao_series(const fs::path& path);

/// Known production sites: CSV x,y (header optional).
std::vector<Point> load_known_locations(const fs::path& path);

/// Image population: CSV image_id,min_x,min_y,max_x,max_y,year,tile_ref (header required).
std::vector<ImageRecord> parse_images_csv(std::istream& in);
std::vector<ImageRecord> load_images(const fs::path& path);

// ---------------------------------------------------------------------------
// Factor configuration

struct FactorConfig {
  DepthConfig depth;
  double stocking_lower = 5.0;
  double stocking_upper = 20.0;
  std::vector<SpeciesParams> species;
  std::map<Period, std::map<std::string, double>> shares;
  std::vector<ImputationRule> imputation_rules = default_imputation_rules();
  std::size_t replicates = 10'000;
  std::uint64_t seed = 0;
  // Explicit area-error cells; when absent they are fitted from annotations.
  std::optional<AreaErrorModel> area_errors;

  /// Species-weighted factors for every period with shares.
  FactorModel build(const AreaErrorModel& fitted_errors) const;
};

FactorConfig factor_config_from_json(const Json& doc);
Json factor_config_to_json(const FactorConfig& config);
FactorConfig load_factor_config(const fs::path& path);
void save_factor_config(const fs::path& path, const FactorConfig& config);

/// {"2000-2004": [[col, row], ...], ...}
CoverageMap coverage_from_json(const Json& doc);
Json coverage_to_json(const CoverageMap& coverage);

// ---------------------------------------------------------------------------
// Review records (JSON lines, append-only)

enum class ReviewDecision { confirm, reject, edit };

std::string_view to_string(ReviewDecision decision) noexcept;
std::optional<ReviewDecision> parse_decision(std::string_view text) noexcept;

struct EditedBox {
  GeoRect box;
  CageType cage_type = CageType::circular;

  friend bool operator==(const EditedBox&, const EditedBox&) = default;
};

struct ReviewRecord {
  std::string record_id;
  std::string image_id;
  std::string reviewer;
  ReviewDecision decision = ReviewDecision::confirm;
  std::vector<EditedBox> boxes;
  std::string timestamp;
  std::optional<std::string> supersedes;

  /// Throws ValidationError (edits need at least one box; ids non-empty).
  void validate() const;

  friend bool operator==(const ReviewRecord&, const ReviewRecord&) = default;
};

Json review_record_to_json(const ReviewRecord& record);
/// Throws ValidationError on malformed payloads.
ReviewRecord review_record_from_json(const Json& doc);

std::vector<ReviewRecord> parse_review_log(std::istream& in);
std::vector<ReviewRecord> load_review_log(const fs::path& path);

/// Append-only review log on disk. Appends are serialized and flushed.
class ReviewLog {
 public:
  /// Opens (creating if needed) and replays the existing file.
  explicit ReviewLog(fs::path path);
  /// In-memory log.
  ReviewLog() = default;

  void append(const ReviewRecord& record);
  std::vector<ReviewRecord> records() const;
  const fs::path& path() const noexcept { return path_; }

 private:
  fs::path path_;
  mutable std::mutex mutex_;
  std::vector<ReviewRecord> records_;
};

/// The record that currently stands for each image: the head of its supersede
/// chain (for several heads, the one appended last). Validates the chain:
/// unknown or cross-image `supersedes`, a record superseded twice, or a cycle
/// raise IntegrityError.
std::map<std::string, ReviewRecord> latest_records(std::span<const ReviewRecord> records);

/// Annotations implied by the review log: confirms re-emit the image's
/// predicted boxes (score dropped), edits emit the edited boxes, rejects emit
/// nothing. The capture year of an edited image comes from `image_years`, or
/// from its predictions; ValidationError when neither knows it.
std::vector<Detection> export_confirmed_annotations(std::span<const ReviewRecord> records,
                                                    std::span<const Detection> predictions,
                                                    const PeriodMap& periods = PeriodMap::standard(),
                                                    const std::map<std::string, int>& image_years = {});

// ---------------------------------------------------------------------------
// Run manifests

struct RunManifest {
  std::string run_id;
  std::string command;
  std::map<std::string, std::string> input_digests;  // path -> sha256 hex
  Json config;
  std::uint64_t seed = 0;
  std::string tool_version;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> artifacts;
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

/// Deterministic id from command, config and input digests.
std::string derive_run_id(const std::string& command, const Json& config,
                          const std::map<std::string, std::string>& digests);

Json manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const Json& doc);
void save_manifest(const fs::path& path, const RunManifest& manifest);
/// Loads a manifest and re-hashes every input; IntegrityError on mismatch.
RunManifest load_verified_manifest(const fs::path& path);

// ---------------------------------------------------------------------------
// Result artifacts

Json clusters_to_json(std::span<const CageCluster> clusters);
Json tuning_result_to_json(const TuningResult& result);
Json upper_bound_to_json(const UpperBoundResult& result, const UpperBoundParams& params);
Json eval_report_to_json(const EvalReport& report);
Json tonnage_to_json(std::span<const TonnageEstimate> estimates, std::size_t replicates);
Json fao_comparison_to_json(std::span<const FaoComparisonRow> rows);

/// Little-endian float64 matrix: one row per replicate, one column per period.
void write_replicates(const fs::path& path, std::span<const TonnageEstimate> estimates);
std::vector<std::vector<double>> read_replicates(const fs::path& path, std::size_t columns);

/// Pretty-printed JSON with a trailing newline; keys sorted for byte stability.
void write_json(const fs::path& path, const Json& doc);
Json read_json(const fs::path& path);

}  // namespace cagemap
