#include "cagemap/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <ctime>
#include <fstream>
#include <optional>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>

#include "cagemap/clustering.hpp"
#include "cagemap/datastore.hpp"
#include "cagemap/errors.hpp"
#include "cagemap/evaluation.hpp"
#include "cagemap/production.hpp"
#include "cagemap/review_service.hpp"
#include "cagemap/tuning.hpp"

namespace cagemap::cli {

namespace {

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Flags that override the config file.
struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicates;
  std::optional<std::string> objective;
  std::optional<double> score_threshold;
  std::optional<double> distance_m;
  std::optional<std::size_t> min_cluster_size;
  std::optional<double> near_radius_m;
  std::optional<std::string> out;
  std::optional<std::string> bound_rule;
  std::optional<int> port;
  std::optional<unsigned> workers;
};

// Resolved pipeline configuration. `doc` is the effective JSON (file plus
// flag overrides) and is what manifests record.
struct Config {
  Json doc = Json::object();
  fs::path base_dir = ".";
  fs::path out_dir = "out";
  PeriodMap periods = PeriodMap::standard();
  Combination params{0.785, 50.0, 5};
  ParamGrid grid = ParamGrid::standard();
  std::size_t folds = 5;
  Objective objective = Objective::product;
  std::uint64_t seed = 0;
  std::optional<std::size_t> replicates;
  unsigned workers = 1;
  QueueOptions queue;
  UpperBoundParams bound;
  bool bound_configured = false;
  bool bathymetry_negate = false;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::chrono::seconds lease{300};
  std::optional<std::int64_t> bound_remainder;

  std::optional<fs::path> path(const char* key) const {
    auto it = doc.find(key);
    if (it == doc.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ConfigError(std::string("config: ") + key + " must be a path string");
    fs::path p = it->get<std::string>();
    return p.is_absolute() ? p : base_dir / p;
  }

  fs::path required(const char* key, const std::string& command) const {
    auto p = path(key);
    if (!p) throw ConfigError(command + " needs '" + key + "' in the config");
    if (!fs::exists(*p)) throw ConfigError(std::string(key) + ": " + p->string() + " does not exist");
    return *p;
  }
};

const std::set<std::string> kConfigKeys = {
    "detections", "annotations", "land_mask", "bathymetry", "bathymetry_negate", "fao", "strata", "factors",
    "coverage", "images", "known_locations", "review_log", "period_map", "params", "grid", "folds", "objective",
    "seed", "replicates", "workers", "near_radius_m", "far_sample_fraction", "bound", "serve", "out"};

Config load_config(const Flags& flags) {
  Config cfg;
  if (!flags.config.empty()) {
    const fs::path path = flags.config;
    if (!fs::exists(path)) throw ConfigError("config file " + path.string() + " does not exist");
    cfg.doc = read_json(path);
    if (!cfg.doc.is_object()) throw ConfigError("config must be a JSON object");
    cfg.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  }
  for (const auto& [key, value] : cfg.doc.items()) {
    if (!kConfigKeys.contains(key)) throw ConfigError("config: unknown key '" + key + "'");
  }
  Json& d = cfg.doc;
  if (flags.seed) d["seed"] = *flags.seed;
  if (flags.replicates) d["replicates"] = *flags.replicates;
  if (flags.objective) d["objective"] = *flags.objective;
  if (flags.score_threshold) d["params"]["score_threshold"] = *flags.score_threshold;
  if (flags.distance_m) d["params"]["distance_m"] = *flags.distance_m;
  if (flags.min_cluster_size) d["params"]["min_cluster_size"] = *flags.min_cluster_size;
  if (flags.near_radius_m) d["near_radius_m"] = *flags.near_radius_m;
  if (flags.workers) d["workers"] = *flags.workers;
  if (flags.bound_rule) d["bound"]["rule"] = *flags.bound_rule;
  if (flags.port) d["serve"]["port"] = *flags.port;

  try {
    if (flags.out) {
      cfg.out_dir = *flags.out;
    } else if (d.contains("out")) {
      fs::path o = d["out"].get<std::string>();
      cfg.out_dir = o.is_absolute() ? o : cfg.base_dir / o;
    }
    if (d.contains("period_map")) {
      for (const auto& [year, period] : d["period_map"].items()) {
        auto p = parse_period(period.get<std::string>());
        if (!p) throw ConfigError("period_map: unknown period '" + period.get<std::string>() + "'");
        cfg.periods.assign(std::stoi(year), *p);
      }
    }
    if (d.contains("params")) {
      const auto& p = d["params"];
      cfg.params.score_threshold = p.value("score_threshold", cfg.params.score_threshold);
      cfg.params.distance = p.value("distance_m", cfg.params.distance);
      cfg.params.min_cluster_size = p.value("min_cluster_size", cfg.params.min_cluster_size);
    }
    if (d.contains("grid")) {
      const auto& g = d["grid"];
      if (g.contains("score_thresholds")) cfg.grid.score_thresholds = g["score_thresholds"].get<std::vector<double>>();
      if (g.contains("distance_thresholds")) {
        cfg.grid.distance_thresholds = g["distance_thresholds"].get<std::vector<double>>();
      }
      if (g.contains("min_cluster_sizes")) {
        cfg.grid.min_cluster_sizes = g["min_cluster_sizes"].get<std::vector<std::size_t>>();
      }
    }
    cfg.folds = d.value("folds", cfg.folds);
    cfg.objective = parse_objective(d.value("objective", std::string("product")));
    cfg.seed = d.value("seed", cfg.seed);
    if (d.contains("replicates")) cfg.replicates = d["replicates"].get<std::size_t>();
    cfg.workers = d.value("workers", 1u);
    cfg.queue.near_radius_m = d.value("near_radius_m", cfg.queue.near_radius_m);
    cfg.queue.far_sample_fraction = d.value("far_sample_fraction", cfg.queue.far_sample_fraction);
    cfg.queue.seed = cfg.seed;
    cfg.bathymetry_negate = d.value("bathymetry_negate", false);

    cfg.bound.sample_size = 10'518;
    cfg.bound.stratum_size = 783'355;
    cfg.bound.grid = proportion_grid(1e-5, 1e-4, 1e-6);
    if (d.contains("bound")) {
      cfg.bound_configured = true;
      const auto& b = d["bound"];
      cfg.bound.sample_size = b.value("sample_size", cfg.bound.sample_size);
      cfg.bound.stratum_size = b.value("stratum_size", cfg.bound.stratum_size);
      cfg.bound.cages_per_image = b.value("cages_per_image", cfg.bound.cages_per_image);
      cfg.bound.trials = b.value("trials", cfg.bound.trials);
      cfg.bound.target_prob = b.value("target_prob", cfg.bound.target_prob);
      if (b.contains("grid")) {
        const auto& g = b["grid"];
        cfg.bound.grid = proportion_grid(g.at("lo").get<double>(), g.at("hi").get<double>(), g.at("step").get<double>());
      }
      const std::string rule = b.value("rule", std::string("largest_accepted"));
      if (rule == "largest_accepted") {
        cfg.bound.rule = BoundRule::largest_accepted;
      } else if (rule == "smallest_rejected") {
        cfg.bound.rule = BoundRule::smallest_rejected;
      } else {
        throw ConfigError("bound.rule must be largest_accepted or smallest_rejected");
      }
    }
    cfg.bound.seed = cfg.seed;
    cfg.bound.workers = cfg.workers;

    if (d.contains("serve")) {
      const auto& s = d["serve"];
      cfg.host = s.value("host", cfg.host);
      cfg.port = s.value("port", cfg.port);
      cfg.lease = std::chrono::seconds(s.value("lease_s", 300));
      if (s.contains("bound_remainder")) cfg.bound_remainder = s["bound_remainder"].get<std::int64_t>();
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ConfigError("config: period_map keys must be years");
  }
  if (cfg.workers == 0) cfg.workers = 1;
  return cfg;
}

// Tracks inputs and artifacts of one command and writes its manifest.
class Run {
 public:
  Run(std::string command, const Config& cfg, std::ostream& out)
      : command_(std::move(command)), cfg_(cfg), out_(out), started_(utc_now()) {}

  fs::path input(const fs::path& path) {
    digests_[fs::absolute(path).lexically_normal().string()] = sha256_file(path);
    return path;
  }

  const std::string& id() {
    if (id_.empty()) id_ = derive_run_id(command_, cfg_.doc, digests_);
    return id_;
  }

  void artifact(const std::string& name, Json doc) {
    if (doc.is_object()) {
      doc["run_id"] = id();
      doc["manifest"] = manifest_name();
    }
    write_json(cfg_.out_dir / name, doc);
    artifacts_.push_back(name);
    out_ << "wrote " << (cfg_.out_dir / name).string() << '\n';
  }

  void binary_artifact(const std::string& name) {
    artifacts_.push_back(name);
    out_ << "wrote " << (cfg_.out_dir / name).string() << '\n';
  }

  void finish() {
    RunManifest m;
    m.run_id = id();
    m.command = command_;
    m.input_digests = digests_;
    m.config = cfg_.doc;
    m.seed = cfg_.seed;
    m.tool_version = kToolVersion;
    m.started_at = started_;
    m.finished_at = utc_now();
    m.artifacts = artifacts_;
    save_manifest(cfg_.out_dir / manifest_name(), m);
  }

 private:
  std::string manifest_name() const { return command_ + ".manifest.json"; }

  std::string command_;
  const Config& cfg_;
  std::ostream& out_;
  std::string started_;
  std::string id_;
  std::map<std::string, std::string> digests_;
  std::vector<std::string> artifacts_;
};

struct Predictions {
  std::string crs;
  std::vector<Detection> kept;
  std::vector<Detection> rejected;
  std::optional<LandMask> mask;
};

Predictions load_predictions(Run& run, const Config& cfg, const std::string& command) {
  Predictions p;
  auto file = read_detection_file(run.input(cfg.required("detections", command)), cfg.periods);
  p.crs = file.crs;
  if (auto mask_path = cfg.path("land_mask")) {
    p.mask = load_land_mask(run.input(cfg.required("land_mask", command)));
    auto split = partition_on_land(file.detections, *p.mask, p.crs);
    p.kept = std::move(split.kept);
    p.rejected = std::move(split.rejected);
  } else {
    p.kept = std::move(file.detections);
  }
  return p;
}

std::vector<CageCluster> postprocess(std::span<const Detection> detections, const Combination& params) {
  return cluster_detections(apply_score_threshold(detections, params.score_threshold), params.distance,
                            params.min_cluster_size);
}

Json combination_json(const Combination& c) {
  return {{"score_threshold", c.score_threshold}, {"distance_m", c.distance}, {"min_cluster_size", c.min_cluster_size}};
}

// ---------------------------------------------------------------------------
// Commands

int cmd_filter(const Config& cfg, std::ostream& out) {
  Run run("filter", cfg, out);
  auto preds = load_predictions(run, cfg, "filter");
  if (!preds.mask) throw ConfigError("filter needs 'land_mask' in the config");
  Json filtered = detections_to_geojson(preds.kept, preds.crs);
  run.artifact("filtered.geojson", filtered);
  Json rejected = Json::array();
  for (const auto& d : preds.rejected) rejected.push_back(d.id);
  run.artifact("filter_summary.json",
               {{"kept", preds.kept.size()}, {"rejected", preds.rejected.size()}, {"rejected_ids", rejected}});
  run.finish();
  return kExitOk;
}

int cmd_cluster(const Config& cfg, std::ostream& out) {
  Run run("cluster", cfg, out);
  auto preds = load_predictions(run, cfg, "cluster");
  const auto clusters = postprocess(preds.kept, cfg.params);
  run.artifact("clusters.json", {{"params", combination_json(cfg.params)},
                                 {"cluster_count", clusters.size()},
                                 {"clusters", clusters_to_json(clusters)}});
  out << clusters.size() << " clusters\n";
  run.finish();
  return kExitOk;
}

int cmd_tune(const Config& cfg, std::ostream& out) {
  Run run("tune", cfg, out);
  auto preds = load_predictions(run, cfg, "tune");
  const auto labels = load_detections(run.input(cfg.required("annotations", "tune")), cfg.periods);
  const auto result = grid_search(preds.kept, labels, cfg.grid, cfg.folds, cfg.objective, cfg.seed, cfg.workers);
  run.artifact("tuning.json", tuning_result_to_json(result));
  out << "best " << combination_json(result.best).dump() << '\n';
  run.finish();
  return kExitOk;
}

UpperBoundResult compute_bound(const Config& cfg) { return upper_bound_population(cfg.bound); }

LevelMetrics level_metrics(EvalLevel level, const MatchResult& match, std::span<const Detection> label_reps,
                           const std::map<std::string, std::string>& image_stratum,
                           std::span<const StratumSpec> strata) {
  LevelMetrics m;
  m.level = level;
  m.predictions = match.prediction_tp.size();
  m.labels = match.label_tp.size();
  m.tp_predictions = match.tp_predictions();
  m.tp_labels = match.tp_labels();
  m.precision = precision(match);
  const auto counts = count_by_stratum(match, label_reps, image_stratum);
  m.recall = stratified_recall(counts, strata);
  m.predictions_multi_matched = match.predictions_multi_matched;
  m.labels_multi_matched = match.labels_multi_matched;
  return m;
}

int cmd_evaluate(const Config& cfg, std::ostream& out) {
  Run run("evaluate", cfg, out);
  auto preds = load_predictions(run, cfg, "evaluate");
  const auto labels = load_detections(run.input(cfg.required("annotations", "evaluate")), cfg.periods);

  EvalReport report;
  for (const auto& d : preds.kept) {
    if (d.cage_type == CageType::other) ++report.other_type_predictions;
  }
  const auto clusters = postprocess(preds.kept, cfg.params);
  const auto kept = cluster_members(clusters);
  const auto label_clusters = cluster_detections(labels, cfg.params.distance, 1);

  // Stratum of every labelled image: from the image population when given,
  // otherwise one fully sampled stratum.
  std::map<std::string, std::string> image_stratum;
  if (cfg.path("images") && cfg.path("strata")) {
    const auto images = load_images(run.input(cfg.required("images", "evaluate")));
    report.strata = load_strata(run.input(cfg.required("strata", "evaluate")));
    std::vector<Point> known;
    if (cfg.path("known_locations")) known = load_known_locations(run.input(cfg.required("known_locations", "evaluate")));
    const LandMask empty_mask;
    const auto classes = classify_images(images, preds.kept, preds.mask ? *preds.mask : empty_mask, known,
                                         cfg.queue.near_radius_m);
    for (const auto& [image, s] : classes) image_stratum[image] = std::string(to_string(s));
  } else {
    std::set<std::string> images;
    for (const auto& l : labels) images.insert(l.image_id);
    for (const auto& p : preds.kept) images.insert(p.image_id);
    for (const auto& i : images) image_stratum[i] = "all";
    report.strata = {{"all", images.size(), images.size(), "every image, fully sampled"}};
  }

  const MatchResult cage_match = match_tp(kept, labels);
  report.cage = level_metrics(EvalLevel::cage, cage_match, labels, image_stratum, report.strata);

  std::vector<Detection> cluster_reps;
  for (const auto& c : label_clusters) cluster_reps.push_back(c.members.front());
  const MatchResult cluster_match = match_clusters(clusters, label_clusters);
  report.cluster = level_metrics(EvalLevel::cluster, cluster_match, cluster_reps, image_stratum, report.strata);

  if (cfg.bound_configured) report.upper_bound = compute_bound(cfg);
  Json doc = eval_report_to_json(report);
  doc["params"] = combination_json(cfg.params);
  run.artifact("evaluation.json", doc);
  out << "cage precision " << report.cage.precision << " recall " << report.cage.recall.recall << '\n';
  run.finish();
  return kExitOk;
}

int cmd_bound(const Config& cfg, std::ostream& out) {
  Run run("bound", cfg, out);
  const auto result = compute_bound(cfg);
  run.artifact("upper_bound.json", upper_bound_to_json(result, cfg.bound));
  if (result.found) {
    out << "p* " << result.p_star << " bound " << result.bound << " (unrounded " << result.unrounded << ")\n";
  } else {
    out << "no grid proportion satisfies the rule\n";
  }
  run.finish();
  return kExitOk;
}

int cmd_estimate(const Config& cfg, std::ostream& out) {
  Run run("estimate", cfg, out);
  auto preds = load_predictions(run, cfg, "estimate");
  FactorConfig factors = load_factor_config(run.input(cfg.required("factors", "estimate")));
  if (cfg.replicates) factors.replicates = *cfg.replicates;
  if (cfg.doc.contains("seed")) factors.seed = cfg.seed;

  AreaErrorModel fitted;
  if (!factors.area_errors) {
    if (!cfg.path("annotations")) {
      throw ConfigError("estimate needs 'annotations' to fit cage area errors, or area_errors in the factor config");
    }
    const auto labels = load_detections(run.input(cfg.required("annotations", "estimate")), cfg.periods);
    fitted = fit_area_errors(preds.kept, labels);
  }
  const FactorModel model = factors.build(fitted);

  std::optional<BathymetrySampler> bathy;
  if (cfg.path("bathymetry")) bathy = load_bathymetry(run.input(cfg.required("bathymetry", "estimate")), cfg.bathymetry_negate);

  const auto clusters = postprocess(preds.kept, cfg.params);
  BootstrapOptions options;
  options.replicates = factors.replicates;
  options.seed = factors.seed;
  options.workers = cfg.workers;
  const auto boot = bootstrap_tonnage(clusters, bathy ? &*bathy : nullptr, model, options);

  CoverageMap coverage;
  if (cfg.path("coverage")) coverage = coverage_from_json(read_json(run.input(cfg.required("coverage", "estimate"))));
  const auto imputed = impute_missing(boot, coverage, factors.imputation_rules);
  for (const auto& s : imputed.skipped) {
    out << "imputation skipped " << to_string(s.location) << ": " << label(s.donor) << " also lacks imagery for "
        << label(s.target) << '\n';
  }

  Json doc = tonnage_to_json(imputed.estimates, boot.replicates);
  Json skipped = Json::array();
  for (const auto& s : imputed.skipped) {
    skipped.push_back({{"target", label(s.target)}, {"donor", label(s.donor)}, {"tile", {s.location.col, s.location.row}}});
  }
  doc["imputation_skipped"] = skipped;
  doc["seed"] = factors.seed;
  doc["params"] = combination_json(cfg.params);
  Json period_columns = Json::array();
  for (const auto& e : imputed.estimates) period_columns.push_back(label(e.period));
  doc["replicate_columns"] = period_columns;
  run.artifact("tonnage.json", doc);

  write_replicates(cfg.out_dir / "replicates.f64", imputed.estimates);
  run.binary_artifact("replicates.f64");
  std::vector<TonnageEstimate> with_imputation = imputed.estimates;
  for (auto& e : with_imputation) e.replicates = e.imputed_replicates;
  write_replicates(cfg.out_dir / "replicates_imputed.f64", with_imputation);
  run.binary_artifact("replicates_imputed.f64");

  if (cfg.path("fao")) {
    const auto fao = load_fao_series(run.input(cfg.required("fao", "estimate")));
    run.artifact("fao_comparison.json", {{"rows", fao_comparison_to_json(compare_fao(imputed.estimates, fao, cfg.periods))}});
  }
  for (const auto& e : imputed.estimates) {
    out << label(e.period) << ": " << e.mean << " t/yr (sd " << e.sd << ", " << e.clusters << " clusters)\n";
  }
  run.finish();
  return kExitOk;
}

struct Queue {
  std::vector<ImageRecord> images;
  std::vector<ReviewTask> tasks;
  std::map<std::string, ImageStratum> strata;
};

Queue make_queue(Run& run, const Config& cfg, const Predictions& preds, const std::string& command) {
  Queue q;
  q.images = load_images(run.input(cfg.required("images", command)));
  std::vector<Point> known;
  if (cfg.path("known_locations")) known = load_known_locations(run.input(cfg.required("known_locations", command)));
  const LandMask empty_mask;
  const LandMask& mask = preds.mask ? *preds.mask : empty_mask;
  q.tasks = build_queue(q.images, preds.kept, mask, known, cfg.queue);
  q.strata = classify_images(q.images, preds.kept, mask, known, cfg.queue.near_radius_m);
  return q;
}

std::int64_t bound_remainder(const Config& cfg) {
  if (cfg.bound_remainder) return *cfg.bound_remainder;
  if (!cfg.bound_configured) return 0;
  const auto b = compute_bound(cfg);
  return b.found ? b.bound : 0;
}

std::atomic<httplib::Server*> g_server{nullptr};

extern "C" void stop_server(int) {
  if (auto* s = g_server.load()) s->stop();
}

int cmd_serve(const Config& cfg, std::ostream& out) {
  Run run("serve", cfg, out);
  auto preds = load_predictions(run, cfg, "serve");
  auto queue = make_queue(run, cfg, preds, "serve");
  const fs::path log_path = cfg.path("review_log").value_or(cfg.out_dir / "review_log.jsonl");
  ReviewLog log(log_path);
  ReviewService service(std::move(queue.tasks), log, queue.images.size(), bound_remainder(cfg), cfg.lease);
  auto server = make_review_server(service);
  g_server = server.get();
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  out << "serving " << service.size() << " tasks on http://" << cfg.host << ':' << cfg.port << std::endl;
  const bool ok = server->listen(cfg.host, cfg.port);
  g_server = nullptr;
  if (!ok) throw Error("internal", "could not listen on " + cfg.host + ":" + std::to_string(cfg.port));
  run.finish();
  return kExitOk;
}

int cmd_report(const Config& cfg, std::ostream& out) {
  Run run("report", cfg, out);
  auto preds = load_predictions(run, cfg, "report");
  auto queue = make_queue(run, cfg, preds, "report");
  std::vector<ReviewRecord> records;
  if (auto log_path = cfg.path("review_log"); log_path && fs::exists(*log_path)) {
    records = load_review_log(run.input(*log_path));
  }
  std::map<std::string, int> years;
  for (const auto& i : queue.images) years[i.image_id] = i.year;
  std::vector<Detection> queued_predictions;
  for (const auto& t : queue.tasks) queued_predictions.insert(queued_predictions.end(), t.predictions.begin(), t.predictions.end());
  const auto confirmed = export_confirmed_annotations(records, queued_predictions, cfg.periods, years);
  const auto burden = burden_report(queue.tasks.size(), queue.images.size(), confirmed.size(), bound_remainder(cfg));

  std::map<ImageStratum, std::size_t> queued;
  for (const auto& t : queue.tasks) queued[queue.strata.at(t.image_id)]++;
  Json strata = Json::array();
  for (const auto& s : stratum_specs(queue.strata, queued)) {
    strata.push_back({{"name", s.name}, {"population_size", s.population_size}, {"queued", s.sampled_size}, {"predicate", s.predicate}});
  }
  std::size_t done = 0;
  std::set<std::string> reviewed;
  for (const auto& [image, head] : latest_records(records)) reviewed.insert(image);
  for (const auto& t : queue.tasks) done += reviewed.contains(t.image_id);
  run.artifact("report.json", {{"burden", burden_to_json(burden)},
                               {"strata", strata},
                               {"reviewed_tasks", done},
                               {"pending_tasks", queue.tasks.size() - done}});
  out << "review burden " << burden.queue_size << " / " << burden.population_size << " images (" << burden.fraction * 100.0
      << "%)\n";
  run.finish();
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Aquaculture cage mapping pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  Flags flags;
  app.add_option("--config", flags.config, "Pipeline config (JSON); relative paths resolve against its directory");
  app.add_option("--seed", flags.seed, "Random seed");
  app.add_option("--replicates", flags.replicates, "Bootstrap replicates")->check(CLI::PositiveNumber);
  app.add_option("--objective", flags.objective, "Tuning objective")->check(CLI::IsMember({"product", "f1"}));
  app.add_option("--score-threshold", flags.score_threshold, "Minimum prediction score")->check(CLI::Range(0.0, 1.0));
  app.add_option("--distance-m", flags.distance_m, "Cluster distance threshold (m)")->check(CLI::NonNegativeNumber);
  app.add_option("--min-cluster-size", flags.min_cluster_size, "Minimum cluster size")->check(CLI::PositiveNumber);
  app.add_option("--near-radius-m", flags.near_radius_m, "Near-known-site radius (m)")->check(CLI::PositiveNumber);
  app.add_option("--out", flags.out, "Output directory");
  app.add_option("--bound-rule", flags.bound_rule, "How p* is read off the zero-fraction curve")
      ->check(CLI::IsMember({"largest_accepted", "smallest_rejected"}));
  app.add_option("--port", flags.port, "Port for serve")->check(CLI::Range(0, 65535));
  app.add_option("--workers", flags.workers, "Worker threads")->check(CLI::PositiveNumber);

  std::map<std::string, int (*)(const Config&, std::ostream&)> commands = {
      {"filter", cmd_filter}, {"cluster", cmd_cluster}, {"tune", cmd_tune},   {"evaluate", cmd_evaluate},
      {"bound", cmd_bound},   {"estimate", cmd_estimate}, {"serve", cmd_serve}, {"report", cmd_report}};
  const std::map<std::string, std::string> help = {
      {"filter", "Drop detections touching land"},
      {"cluster", "Score-filter and cluster detections"},
      {"tune", "k-fold grid search over post-processing parameters"},
      {"evaluate", "Precision, stratified recall and the unsampled-stratum bound"},
      {"bound", "Upper bound on cages in the unsampled stratum"},
      {"estimate", "Bootstrap tonnage, imputation and FAO comparison"},
      {"serve", "Run the review service"},
      {"report", "Review burden and queue summary"}};
  for (const auto& [name, fn] : commands) app.add_subcommand(name, help.at(name))->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const Config cfg = load_config(flags);
    fs::create_directories(cfg.out_dir);
    return commands.at(command)(cfg, out);
  } catch (const InvariantError& e) {
    err << "error [" << e.code() << "]: " << e.what() << '\n';
    return kExitInternal;
  } catch (const Error& e) {
    err << "error [" << e.code() << "]: " << e.what() << '\n';
    return e.code() == "internal" ? kExitInternal : kExitInvalid;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace cagemap::cli
