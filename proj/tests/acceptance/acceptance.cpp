// Acceptance run: one PASS/FAIL line per primary criterion. Exit status is
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "builders.hpp"
#include "cagemap/cage_geometry.hpp"
#include "cagemap/cli.hpp"
#include "cagemap/clustering.hpp"
#include "cagemap/datastore.hpp"
#include "cagemap/distributions.hpp"
#include "cagemap/geodata.hpp"
#include "cagemap/evaluation.hpp"
#include "cagemap/production.hpp"
#include "cagemap/review_service.hpp"
#include "cagemap/rng.hpp"
#include "cagemap/tuning.hpp"
#include "coast.hpp"
#include "oracles.hpp"
#include "planted.hpp"

using namespace cagemap;
namespace t = cagemap::test;

namespace {

struct Verdict {
  bool pass = false;
  std::string measured;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Upper bound and population accounting

constexpr std::uint64_t kBoundSeed = 0;

UpperBoundResult reference_bound() {
  UpperBoundParams p;
  p.sample_size = 10'518;
  p.stratum_size = 783'355;
  p.cages_per_image = 5.0;
  p.trials = 10'000;
  p.target_prob = 0.5;
  p.grid = proportion_grid(1e-5, 1e-4, 1e-6);
  p.seed = kBoundSeed;
  return upper_bound_population(p);
}

Verdict upper_bound_reproduction(double& elapsed, UpperBoundResult& out) {
  const auto start = Clock::now();
  out = reference_bound();
  elapsed = seconds_since(start);
  const bool p_ok = out.found && std::abs(out.p_star - 7.0e-5) < 1e-12;
  const bool bound_ok = out.bound == 274 || out.bound == 275;
  const double closed_form = std::pow(1.0 - 7.0e-5, 10'518.0);
  return {p_ok && bound_ok && elapsed < 10.0,
          fmt("p*=%.1e bound=%lld (zero-fraction at p*=%.4f; closed form at 7e-5 is %.4f < 0.5)", out.p_star,
              static_cast<long long>(out.bound), out.zero_fraction, closed_form)};
}

Verdict population_accounting(const UpperBoundResult& bound) {
  const auto b = burden_report(0, 0, 4010, bound.found ? bound.bound : 0);
  return {std::llabs(b.population_bound - 4285) <= 1,
          fmt("4010 + %lld = %lld (want 4285 +- 1)", static_cast<long long>(b.bound_remainder),
              static_cast<long long>(b.population_bound))};
}

// ---------------------------------------------------------------------------
// Area geometry

Verdict area_geometry() {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi / 2);
  std::uniform_real_distribution<double> side(0.5, 60.0);
  std::uniform_real_distribution<double> axis(1.0, 40.0);
  std::uniform_real_distribution<double> frac(0.0, 0.99);
  std::size_t violations = 0;
  for (int i = 0; i < 100'000; ++i) {
    const auto poly = t::rotated_square(side(gen), angle(gen));
    const double area = t::shoelace(poly);
    const auto a = area_bounds(t::bounds_of(poly), CageType::square, BorderStatus::interior);
    // The 45 degree square sits exactly on the lower bound; allow rounding.
    violations += area < a.min_area * (1 - 1e-12) || area > a.max_area * (1 + 1e-12);
  }
  for (int i = 0; i < 100'000; ++i) {
    const double a = axis(gen), b = axis(gen);
    const bool corner = i % 2 == 0;
    const auto e = corner ? t::corner_clipped_ellipse(a, b, frac(gen) * a / 1.5, frac(gen) * b / 1.5)
                          : t::edge_clipped_ellipse(a, b, frac(gen) * a);
    const auto bounds = area_bounds(e.width, e.height, CageType::circular, corner ? BorderStatus::corner : BorderStatus::edge);
    violations += e.area < bounds.min_area * (1 - 1e-9) || e.area > bounds.max_area * (1 + 1e-9);
  }
  return {violations == 0, fmt("%zu violations in 1e5 rotated squares + 1e5 clipped ellipses", violations)};
}

// ---------------------------------------------------------------------------
// Clustering

using IdSets = std::set<std::set<std::string>>;

IdSets brute_clusters(const std::vector<Detection>& ds, double dist, std::size_t min_size) {
  IdSets out;
  for (Period p : kAllPeriods) {
    std::vector<const Detection*> group;
    std::vector<Point> pts;
    for (const auto& d : ds) {
      if (d.period != p) continue;
      group.push_back(&d);
      pts.push_back(d.box.centroid());
    }
    for (const auto& comp : t::brute_components(pts, dist)) {
      if (comp.size() < min_size) continue;
      std::set<std::string> ids;
      for (std::size_t i : comp) ids.insert(group[i]->id);
      out.insert(ids);
    }
  }
  return out;
}

Verdict dbscan_equivalence() {
  std::mt19937_64 gen(77);
  const int years[] = {2002, 2007, 2011, 2014, 2017, 2020};
  int mismatches = 0;
  std::size_t largest = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = gen() % 301;
    largest = std::max(largest, n);
    const double extent = 200.0 + static_cast<double>(gen() % 3000);
    std::uniform_real_distribution<double> coord(0.0, extent);
    std::vector<Detection> ds;
    for (std::size_t i = 0; i < n; ++i) {
      // Integer coordinates now and then, so exact-threshold ties occur.
      double x = coord(gen), y = coord(gen);
      if (trial % 4 == 0) x = std::floor(x / 10) * 10, y = std::floor(y / 10) * 10;
      ds.push_back(t::det_at("d" + std::to_string(i), x, y, 8.0, "img", years[gen() % 6]));
    }
    const double dist = trial % 4 == 0 ? 10.0 * static_cast<double>(1 + gen() % 10) : 5.0 + static_cast<double>(gen() % 150);
    const std::size_t min_size = 1 + gen() % 8;
    IdSets got;
    for (const auto& c : cluster_detections(ds, dist, min_size)) {
      std::set<std::string> ids;
      for (const auto& m : c.members) ids.insert(m.id);
      got.insert(ids);
    }
    mismatches += got != brute_clusters(ds, dist, min_size);
  }
  return {mismatches == 0, fmt("%d of 500 instances differ (n <= %zu)", mismatches, largest)};
}

// ---------------------------------------------------------------------------
// Estimator identities

struct Fixture {
  std::vector<Detection> predictions;
  std::vector<Detection> labels;
  std::map<std::string, std::string> image_stratum;
};

Fixture random_fixture(std::mt19937_64& gen, int images, int per_image) {
  Fixture f;
  std::uniform_real_distribution<double> coord(0.0, 120.0);
  std::uniform_real_distribution<double> size(1.0, 14.0);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int i = 0; i < images; ++i) {
    const std::string image = "im" + std::to_string(i);
    const int year = gen() % 2 ? 2020 : 2011;
    f.image_stratum[image] = "s" + std::to_string(i % 4);
    for (int k = 0; k < per_image; ++k) {
      double x = coord(gen), y = coord(gen);
      f.predictions.push_back(t::det(image + "p" + std::to_string(k), x, y, x + size(gen), y + size(gen), image, year, score(gen)));
      x = coord(gen), y = coord(gen);
      f.labels.push_back(t::label_of(t::det(image + "l" + std::to_string(k), x, y, x + size(gen), y + size(gen), image, year)));
    }
  }
  return f;
}

double recall_or_zero(const std::vector<Detection>& preds, const std::vector<Detection>& labels) {
  return labels.empty() ? 0.0 : recall(match_tp(preds, labels));
}

Verdict estimator_identities() {
  std::mt19937_64 gen(5150);
  int identity_failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto f = random_fixture(gen, 2 + gen() % 12, 1 + gen() % 10);
    const auto m = match_tp(f.predictions, f.labels);
    std::map<std::string, std::size_t> n;
    for (const auto& [img, s] : f.image_stratum) n[s]++;
    std::vector<StratumSpec> strata;
    for (const auto& [s, k] : n) strata.push_back({s, k, k, ""});
    identity_failures += stratified_recall(count_by_stratum(m, f.labels, f.image_stratum), strata).recall != recall(m);
  }

  int sweep_failures = 0;
  for (int sweep = 0; sweep < 1000; ++sweep) {
    const auto f = random_fixture(gen, 3 + gen() % 4, 3 + gen() % 8);
    bool ok = true;
    // Recall never rises with the score threshold, nor with the minimum cluster size.
    double prev = 2.0;
    for (int k = 0; k <= 20; ++k) {
      const double r = recall_or_zero(apply_score_threshold(f.predictions, k / 20.0), f.labels);
      ok &= r <= prev;
      prev = r;
    }
    const double dist = 5.0 + static_cast<double>(gen() % 40);
    prev = 2.0;
    for (std::size_t size = 1; size <= 6; ++size) {
      const double r = recall_or_zero(cluster_members(cluster_detections(f.predictions, dist, size)), f.labels);
      ok &= r <= prev;
      prev = r;
    }
    // A spurious prediction cannot raise precision; a matched label cannot lower recall.
    const auto m0 = match_tp(f.predictions, f.labels);
    auto more = f.predictions;
    more.push_back(t::det("spurious", 0, 0, 5, 5, "nolabels", 2020, 0.99));
    ok &= precision(match_tp(more, f.labels)) <= precision(m0);
    auto labels = f.labels;
    const auto& anchor = f.predictions[gen() % f.predictions.size()];
    labels.push_back(t::label_of(t::det("extra", anchor.box.min_x, anchor.box.min_y, anchor.box.max_x,
                                        anchor.box.max_y, anchor.image_id, anchor.year)));
    ok &= recall(match_tp(f.predictions, labels)) >= recall(m0);
    sweep_failures += !ok;
  }
  return {identity_failures == 0 && sweep_failures == 0,
          fmt("%d/100 stratified != plain recall; %d/1000 sweeps break monotonicity", identity_failures, sweep_failures)};
}

// ---------------------------------------------------------------------------
// Bootstrap calibration

FactorModel point_mass(double depth, double stocking, double harvest) {
  FactorModel f;
  f.depth.sd_scale = 0.0;
  f.depth.fallback_m = depth;
  for (Period p : kAllPeriods) f.periods[p] = {{stocking, 0.0}, {harvest, 0.0}};
  f.area_errors = AreaErrorModel::exact();
  return f;
}

Verdict bootstrap_calibration() {
  const std::size_t B = 10'000;
  // Square cage of side 20: A ~ U(200, 400); D = 5, S = 10, H = 1.
  const std::vector<CageCluster> square = {make_cluster({t::det_at("sq", 100, 100, 20, "img", 2020, 0.9, CageType::square)})};
  BootstrapOptions opt;
  opt.replicates = B;
  opt.seed = 31;
  const auto r = bootstrap_tonnage(square, nullptr, point_mass(5.0, 10.0, 1.0), opt);
  const auto& e = r.periods[static_cast<std::size_t>(Period::p2019_2021)];
  const double analytic_mean = 0.75 * 400.0 * 5.0 * 10.0 * 1.0 / 1000.0;
  const double analytic_sd = (200.0 / std::sqrt(12.0)) * 5.0 * 10.0 / 1000.0;
  const double tol = 3.0 * analytic_sd / std::sqrt(static_cast<double>(B));
  const bool mean_ok = std::abs(e.mean - analytic_mean) <= tol;

  const std::vector<CageCluster> circle = {make_cluster({t::det_at("c", 0, 0, 24, "img", 2020)}),
                                           make_cluster({t::det_at("d", 900, 0, 30, "img", 2008)})};
  const auto degenerate = bootstrap_tonnage(circle, nullptr, point_mass(4.84, 15.0, 0.67), opt);
  bool sd_zero = true;
  for (const auto& p : degenerate.periods) sd_zero &= p.sd == 0.0;

  FactorModel spread;
  spread.depth.fallback_m = 6.0;
  for (Period p : kAllPeriods) {
    spread.periods[p] = species_weighted_params(reference_species(), {{"meagre", 0.3}, {"sea_bass", 0.3}, {"sea_bream", 0.4}});
  }
  spread.area_errors.pooled[CageType::circular] = {5.0, 40.0};
  spread.area_errors.pooled[CageType::square] = {-3.0, 25.0};
  std::vector<CageCluster> mixed = circle;
  mixed.push_back(square[0]);
  BootstrapOptions one = opt;
  one.replicates = 2000;
  BootstrapOptions many = one;
  many.workers = 4;
  const auto a = bootstrap_tonnage(mixed, nullptr, spread, one);
  const auto b = bootstrap_tonnage(mixed, nullptr, spread, many);
  bool identical = true;
  for (std::size_t i = 0; i < a.periods.size(); ++i) identical &= a.periods[i].replicates == b.periods[i].replicates;

  return {mean_ok && sd_zero && identical,
          fmt("mean %.5f vs %.5f (|diff| %.5f, tol %.5f); degenerate sd==0: %s; 1 vs 4 workers identical: %s", e.mean,
              analytic_mean, std::abs(e.mean - analytic_mean), tol, sd_zero ? "yes" : "no", identical ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// Depth and stocking samples

Verdict depth_and_stocking() {
  const std::size_t n = 1'000'000;
  const DepthConfig cfg;
  std::size_t outside = 0;
  double worst_ks = 0.0;
  for (double d : {4.84, 2.5, 12.0}) {
    const DepthDistribution dist(d, cfg);
    Rng rng = Rng::substream(17, 1, static_cast<std::uint64_t>(d * 100));
    std::vector<double> xs(n);
    for (auto& x : xs) {
      x = dist.sample(rng);
      outside += x < 1.0 || x > 2.0 * d;
    }
    const double sl = (d - 1.0) / 1.96, sr = d / 1.96;
    const t::TabulatedCdf left([&](double x) { return t::truncated_pdf(x, d, sl, 1.0, d); }, 1.0, d);
    const t::TabulatedCdf right([&](double x) { return t::truncated_pdf(x, d, sr, d, 2 * d); }, d, 2 * d);
    worst_ks = std::max(worst_ks, t::ks_distance(xs, [&](double x) { return 0.5 * left(x) + 0.5 * right(x); }));
  }
  const double third = 1.0 / 3.0;
  const auto pf = species_weighted_params(reference_species(),
                                          {{"meagre", third}, {"sea_bass", third}, {"sea_bream", 1.0 - 2 * third}});
  const TruncatedNormal stocking(pf.stocking.mean, pf.stocking.sd, 5.0, 20.0);
  Rng rng(23);
  std::vector<double> ss(n);
  for (auto& s : ss) {
    s = stocking.sample(rng);
    outside += s < 5.0 || s > 20.0;
  }
  const t::TabulatedCdf stocking_cdf(
      [&](double x) { return t::truncated_pdf(x, pf.stocking.mean, pf.stocking.sd, 5.0, 20.0); }, 5.0, 20.0);
  const double stocking_ks = t::ks_distance(ss, stocking_cdf);
  return {outside == 0 && worst_ks < 0.01 && stocking_ks < 0.01,
          fmt("%zu draws outside bounds; depth mixture KS %.5f, stocking KS %.5f (limit 0.01)", outside, worst_ks, stocking_ks)};
}

// ---------------------------------------------------------------------------
// Tuning

Verdict tuning_oracle() {
  const auto p = t::planted_fixture(2718, 25);
  const auto grid = ParamGrid::standard();
  const std::uint64_t seed = 12;
  const auto product = grid_search(p.predictions, p.labels, grid, 5, Objective::product, seed);
  const auto f1 = grid_search(p.predictions, p.labels, grid, 5, Objective::f1, seed);
  const auto oracle = t::exhaustive_table(p, grid, 5, seed);
  std::size_t cell_mismatches = 0;
  for (std::size_t i = 0; i < oracle.rows.size(); ++i) {
    for (std::size_t f = 0; f < 5; ++f) {
      cell_mismatches += product.table[i].folds[f].precision != oracle.rows[i].precision[f] ||
                         product.table[i].folds[f].recall != oracle.rows[i].recall[f];
    }
  }
  const bool argmax_ok = product.best == oracle.best_product && f1.best == oracle.best_f1;
  const bool agree = product.best == f1.best;
  return {cell_mismatches == 0 && argmax_ok && agree,
          fmt("%zu of %zu fold cells differ; argmax (%.3f, %.0f m, %zu) oracle (%.3f, %.0f m, %zu); product/f1 agree: %s",
              cell_mismatches, oracle.rows.size() * 5, product.best.score_threshold, product.best.distance,
              product.best.min_cluster_size, oracle.best_product.score_threshold, oracle.best_product.distance,
              oracle.best_product.min_cluster_size, agree ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// End to end

int run_cli(std::vector<std::string> args, std::string& err) {
  args.insert(args.begin(), "cagemap");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, e;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, e);
  err = e.str();
  return code;
}

Verdict end_to_end(const fs::path& workdir) {
  const t::Coast coast = t::Coast::make();
  const auto dir = workdir / "coast";
  fs::remove_all(dir);
  const std::string config = coast.write(dir, 500).string();
  std::string err;
  for (const char* cmd : {"filter", "cluster", "estimate", "report"}) {
    if (run_cli({cmd, "--config", config}, err) != 0) return {false, std::string(cmd) + " failed: " + err};
  }
  const auto clusters = read_json(dir / "out" / "clusters.json")["clusters"];
  std::set<std::set<std::string>> found, planted;
  for (const auto& c : clusters) {
    std::set<std::string> ids;
    for (const auto& m : c["members"]) ids.insert(m.get<std::string>());
    found.insert(ids);
  }
  for (const auto& farm : coast.farms) planted.insert({farm.begin(), farm.end()});
  const bool clusters_ok = clusters.size() == 3 && found == planted;

  const auto tonnage = read_json(dir / "out" / "tonnage.json");
  double total = 0.0;
  bool sd_zero = true;
  for (const auto& p : tonnage["periods"]) {
    total += p["mean"].get<double>();
    sd_zero &= p["sd"].get<double>() == 0.0;
  }
  const double hand = 3.0 * t::Coast::farm_tonnage(6);
  const bool tonnage_ok = std::abs(total - hand) <= 1e-9 * hand && sd_zero;

  // Direct count of the queue: ocean images with a prediction, prediction-free
  // ocean images within 1 km of a known site, and 10% of the rest.
  std::set<std::string> predicted;
  for (const auto& d : coast.predictions) predicted.insert(d.image_id);
  std::size_t direct = 0, far = 0;
  for (const auto& im : coast.images) {
    if (im.frame.max_y <= 0.0) continue;
    if (predicted.contains(im.image_id)) {
      ++direct;
      continue;
    }
    bool near = false;
    for (const auto& k : coast.known) near |= distance(k, im.frame) <= 1000.0;
    near ? ++direct : ++far;
  }
  direct += static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(far)));
  const double expected = static_cast<double>(direct) / static_cast<double>(coast.images.size());
  const auto burden = read_json(dir / "out" / "report.json")["burden"];
  const bool burden_ok = burden["fraction"].get<double>() == expected;

  return {clusters_ok && tonnage_ok && burden_ok,
          fmt("%zu clusters (planted match: %s); tonnage %.6f vs hand %.6f t/yr, sd 0: %s; burden %.6f vs direct %zu/%zu = %.6f",
              clusters.size(), found == planted ? "yes" : "no", total, hand, sd_zero ? "yes" : "no",
              burden["fraction"].get<double>(), direct, coast.images.size(), expected)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string workdir = (fs::temp_directory_path() / "cagemap_acceptance").string();
  app.add_option("--workdir", workdir, "Scratch directory for end-to-end artifacts");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  int failures = 0;
  auto report = [&](const std::string& name, const Verdict& v, double secs) {
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.measured << fmt(" (%.2f s)", secs) << std::endl;
    failures += !v.pass;
  };
  auto timed = [&](const std::string& name, double limit, const std::function<Verdict()>& check) {
    const auto start = Clock::now();
    Verdict v = check();
    const double secs = seconds_since(start);
    if (limit > 0 && secs >= limit) {
      v.pass = false;
      v.measured += fmt("; runtime over %.0f s", limit);
    }
    report(name, v, secs);
  };

  UpperBoundResult bound;
  double bound_secs = 0.0;
  report("upper-bound reproduction", upper_bound_reproduction(bound_secs, bound), bound_secs);
  report("population accounting", population_accounting(bound), 0.0);
  timed("area-geometry oracle", 30.0, area_geometry);
  timed("DBSCAN equivalence", 0.0, dbscan_equivalence);
  timed("estimator identities", 0.0, estimator_identities);
  timed("bootstrap calibration", 0.0, bootstrap_calibration);
  timed("depth/stocking containment", 0.0, depth_and_stocking);
  timed("tuning oracle", 0.0, tuning_oracle);
  timed("end-to-end fixture", 60.0, [&] { return end_to_end(workdir); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
