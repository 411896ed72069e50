#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>

#include <openssl/evp.h>

#include "cagemap/datastore.hpp"
#include "cagemap/errors.hpp"

namespace cagemap {

// ---------------------------------------------------------------------------
// Review records

std::string_view to_string(ReviewDecision decision) noexcept {
  switch (decision) {
    case ReviewDecision::confirm: return "confirm";
    case ReviewDecision::reject: return "reject";
    case ReviewDecision::edit: return "edit";
  }
  return "confirm";
}

std::optional<ReviewDecision> parse_decision(std::string_view text) noexcept {
  if (text == "confirm") return ReviewDecision::confirm;
  if (text == "reject") return ReviewDecision::reject;
  if (text == "edit") return ReviewDecision::edit;
  return std::nullopt;
}

void ReviewRecord::validate() const {
  std::vector<std::string> problems;
  if (record_id.empty()) problems.push_back("record_id is empty");
  if (image_id.empty()) problems.push_back("image_id is empty");
  if (reviewer.empty()) problems.push_back("reviewer is empty");
  if (decision == ReviewDecision::edit && boxes.empty()) problems.push_back("edit decisions need at least one box");
  if (decision != ReviewDecision::edit && !boxes.empty()) {
    problems.push_back(std::string(to_string(decision)) + " decisions carry no boxes");
  }
  for (const auto& b : boxes) {
    if (!b.box.valid() || !(b.box.width() > 0.0) || !(b.box.height() > 0.0)) {
      problems.push_back("edited box is degenerate");
    }
  }
  if (supersedes && (supersedes->empty() || *supersedes == record_id)) {
    problems.push_back("supersedes must name another record");
  }
  if (!problems.empty()) {
    std::string message = "review record " + (record_id.empty() ? std::string("<unnamed>") : record_id) + ":";
    for (const auto& p : problems) message += " " + p + ";";
    message.pop_back();
    throw ValidationError(message, {record_id});
  }
}

Json review_record_to_json(const ReviewRecord& r) {
  Json boxes = Json::array();
  for (const auto& b : r.boxes) {
    boxes.push_back({{"box", {b.box.min_x, b.box.min_y, b.box.max_x, b.box.max_y}},
                     {"cage_type", to_string(b.cage_type)}});
  }
  return {{"record_id", r.record_id},
          {"image_id", r.image_id},
          {"reviewer", r.reviewer},
          {"decision", to_string(r.decision)},
          {"boxes", boxes},
          {"timestamp", r.timestamp},
          {"supersedes", r.supersedes ? Json(*r.supersedes) : Json(nullptr)}};
}

ReviewRecord review_record_from_json(const Json& doc) {
  if (!doc.is_object()) throw ValidationError("review record must be a JSON object");
  ReviewRecord r;
  auto text = [&](const char* key, bool required) -> std::string {
    auto it = doc.find(key);
    if (it == doc.end() || it->is_null()) {
      if (required) throw ValidationError(std::string("review record: missing ") + key);
      return {};
    }
    if (!it->is_string()) throw ValidationError(std::string("review record: ") + key + " must be a string");
    return it->get<std::string>();
  };
  r.record_id = text("record_id", true);
  r.image_id = text("image_id", true);
  r.reviewer = text("reviewer", true);
  const std::string decision = text("decision", true);
  auto d = parse_decision(decision);
  if (!d) throw ValidationError("review record: unknown decision '" + decision + "'", {r.record_id});
  r.decision = *d;
  r.timestamp = text("timestamp", false);
  if (doc.contains("supersedes") && !doc["supersedes"].is_null()) r.supersedes = text("supersedes", true);
  if (doc.contains("boxes") && !doc["boxes"].is_null()) {
    if (!doc["boxes"].is_array()) throw ValidationError("review record: boxes must be an array", {r.record_id});
    for (const auto& b : doc["boxes"]) {
      if (!b.is_object() || !b.contains("box") || !b["box"].is_array() || b["box"].size() != 4) {
        throw ValidationError("review record: each box needs box [min_x, min_y, max_x, max_y]", {r.record_id});
      }
      EditedBox eb;
      const auto& v = b["box"];
      for (const auto& x : v) {
        if (!x.is_number()) throw ValidationError("review record: box coordinates must be numbers", {r.record_id});
      }
      eb.box = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
      const std::string type = b.value("cage_type", "circular");
      auto t = parse_cage_type(type);
      if (!t) throw ValidationError("review record: unknown cage_type '" + type + "'", {r.record_id});
      eb.cage_type = *t;
      r.boxes.push_back(eb);
    }
  }
  r.validate();
  return r;
}

std::vector<ReviewRecord> parse_review_log(std::istream& in) {
  std::vector<ReviewRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(review_record_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw ValidationError("review log line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("review log line " + std::to_string(line_no) + ": " + e.what(), e.offending());
    }
  }
  return out;
}

std::vector<ReviewRecord> load_review_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return parse_review_log(in);
}

ReviewLog::ReviewLog(fs::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  if (fs::exists(path_)) {
    records_ = load_review_log(path_);
  } else {
    std::ofstream touch(path_, std::ios::app);
    if (!touch) throw ConfigError("cannot create review log " + path_.string());
  }
}

void ReviewLog::append(const ReviewRecord& record) {
  record.validate();
  std::lock_guard lock(mutex_);
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    out << review_record_to_json(record).dump() << '\n';
    out.flush();
    if (!out) throw ConfigError("failed appending to review log " + path_.string());
  }
  records_.push_back(record);
}

std::vector<ReviewRecord> ReviewLog::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::map<std::string, ReviewRecord> latest_records(std::span<const ReviewRecord> records) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = index.emplace(records[i].record_id, i);
    if (!inserted && !(records[it->second] == records[i])) {
      throw IntegrityError("record id " + records[i].record_id + " is used by two different records");
    }
  }
  std::unordered_map<std::string, std::string> superseded_by;
  for (const auto& [id, i] : index) {
    const auto& r = records[i];
    if (!r.supersedes) continue;
    auto target = index.find(*r.supersedes);
    if (target == index.end()) {
      throw IntegrityError("record " + r.record_id + " supersedes unknown record " + *r.supersedes);
    }
    if (records[target->second].image_id != r.image_id) {
      throw IntegrityError("record " + r.record_id + " supersedes a record of another image");
    }
    auto [it, inserted] = superseded_by.emplace(*r.supersedes, r.record_id);
    if (!inserted) {
      throw IntegrityError("record " + *r.supersedes + " is superseded by both " + it->second + " and " +
                           r.record_id);
    }
  }
  // Each record has at most one successor and one predecessor, so a chain
  // that walks back more steps than there are records is a cycle.
  for (const auto& [id, i] : index) {
    std::size_t steps = 0;
    const ReviewRecord* r = &records[i];
    while (r->supersedes) {
      if (++steps > index.size()) throw IntegrityError("supersede chain through " + id + " is cyclic");
      r = &records[index.at(*r->supersedes)];
    }
  }
  std::map<std::string, ReviewRecord> heads;
  std::map<std::string, std::size_t> head_pos;
  for (const auto& [id, i] : index) {
    if (superseded_by.contains(id)) continue;
    const auto& r = records[i];
    auto pos = head_pos.find(r.image_id);
    if (pos == head_pos.end() || i > pos->second) {
      head_pos[r.image_id] = i;
      heads[r.image_id] = r;
    }
  }
  return heads;
}

std::vector<Detection> export_confirmed_annotations(std::span<const ReviewRecord> records,
                                                    std::span<const Detection> predictions,
                                                    const PeriodMap& periods,
                                                    const std::map<std::string, int>& image_years) {
  std::map<std::string, std::vector<const Detection*>> by_image;
  for (const auto& p : predictions) by_image[p.image_id].push_back(&p);
  std::vector<Detection> out;
  for (const auto& [image, record] : latest_records(records)) {
    const auto preds = by_image.find(image);
    switch (record.decision) {
      case ReviewDecision::reject:
        break;
      case ReviewDecision::confirm:
        if (preds == by_image.end()) break;
        for (const Detection* p : preds->second) {
          Detection d = *p;
          d.score.reset();
          out.push_back(std::move(d));
        }
        break;
      case ReviewDecision::edit: {
        std::optional<int> year;
        std::optional<GeoRect> frame;
        if (auto y = image_years.find(image); y != image_years.end()) year = y->second;
        if (preds != by_image.end()) {
          if (!year) year = preds->second.front()->year;
          frame = preds->second.front()->image_frame;
        }
        if (!year) throw ValidationError("no capture year known for edited image " + image, {record.record_id});
        const auto period = periods.find(*year);
        if (!period) throw ValidationError("year " + std::to_string(*year) + " of image " + image + " maps to no period");
        for (std::size_t k = 0; k < record.boxes.size(); ++k) {
          Detection d;
          d.id = record.record_id + "#" + std::to_string(k);
          d.box = record.boxes[k].box;
          d.cage_type = record.boxes[k].cage_type;
          d.image_id = image;
          d.year = *year;
          d.period = *period;
          d.image_frame = frame;
          out.push_back(std::move(d));
        }
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifests

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("internal", "sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return sha256_hex(os.str());
}

std::string derive_run_id(const std::string& command, const Json& config,
                          const std::map<std::string, std::string>& digests) {
  std::string canonical = command + '\n' + config.dump() + '\n';
  for (const auto& [path, digest] : digests) canonical += path + ' ' + digest + '\n';
  return sha256_hex(canonical).substr(0, 16);
}

Json manifest_to_json(const RunManifest& m) {
  return {{"run_id", m.run_id},     {"command", m.command},         {"input_digests", m.input_digests},
          {"config", m.config},     {"seed", m.seed},               {"tool_version", m.tool_version},
          {"started_at", m.started_at}, {"finished_at", m.finished_at}, {"artifacts", m.artifacts}};
}

RunManifest manifest_from_json(const Json& doc) {
  RunManifest m;
  try {
    m.run_id = doc.at("run_id").get<std::string>();
    m.command = doc.at("command").get<std::string>();
    m.input_digests = doc.at("input_digests").get<std::map<std::string, std::string>>();
    m.config = doc.value("config", Json::object());
    m.seed = doc.value("seed", std::uint64_t{0});
    m.tool_version = doc.value("tool_version", "");
    m.started_at = doc.value("started_at", "");
    m.finished_at = doc.value("finished_at", "");
    m.artifacts = doc.value("artifacts", std::vector<std::string>{});
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  return m;
}

void save_manifest(const fs::path& path, const RunManifest& manifest) { write_json(path, manifest_to_json(manifest)); }

RunManifest load_verified_manifest(const fs::path& path) {
  RunManifest m = manifest_from_json(read_json(path));
  for (const auto& [input, digest] : m.input_digests) {
    fs::path p(input);
    if (p.is_relative()) p = path.parent_path() / p;
    if (!fs::exists(p)) throw IntegrityError("manifest input " + input + " is missing");
    if (sha256_file(p) != digest) throw IntegrityError("manifest input " + input + " changed since the run");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Result artifacts

namespace {

Json rect_json(const GeoRect& r) { return Json::array({r.min_x, r.min_y, r.max_x, r.max_y}); }

Json combination_json(const Combination& c) {
  return {{"score_threshold", c.score_threshold}, {"distance_m", c.distance}, {"min_cluster_size", c.min_cluster_size}};
}

Json level_json(const LevelMetrics& m) {
  Json terms = Json::array();
  for (const auto& t : m.recall.terms) {
    terms.push_back({{"stratum", t.stratum},
                     {"labels", t.labels},
                     {"matched", t.matched},
                     {"estimated_labels", t.estimated_labels},
                     {"recall", t.recall},
                     {"weight", t.weight}});
  }
  return {{"level", to_string(m.level)},
          {"predictions", m.predictions},
          {"labels", m.labels},
          {"tp_predictions", m.tp_predictions},
          {"tp_labels", m.tp_labels},
          {"precision", m.precision},
          {"recall", m.recall.recall},
          {"recall_terms", terms},
          {"predictions_multi_matched", m.predictions_multi_matched},
          {"labels_multi_matched", m.labels_multi_matched}};
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json clusters_to_json(std::span<const CageCluster> clusters) {
  Json out = Json::array();
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const auto& c = clusters[i];
    Json members = Json::array();
    for (const auto& m : c.members) members.push_back(m.id);
    out.push_back({{"index", i},
                   {"period", label(c.period)},
                   {"centroid", {c.centroid.x, c.centroid.y}},
                   {"union_box", rect_json(c.union_box)},
                   {"size", c.members.size()},
                   {"members", members}});
  }
  return out;
}

Json tuning_result_to_json(const TuningResult& result) {
  Json rows = Json::array();
  for (const auto& row : result.table) {
    for (const auto& f : row.folds) {
      Json r = combination_json(row.params);
      r.update({{"fold", f.fold},
                {"predictions", f.predictions},
                {"labels", f.labels},
                {"precision", f.precision},
                {"recall", f.recall},
                {"product", f.product},
                {"f1", f.f1}});
      rows.push_back(r);
    }
  }
  Json means = Json::array();
  for (const auto& row : result.table) {
    Json r = combination_json(row.params);
    r.update({{"mean_product", row.mean_product}, {"mean_f1", row.mean_f1}});
    means.push_back(r);
  }
  return {{"objective", to_string(result.objective)},
          {"folds", result.folds},
          {"best", combination_json(result.best)},
          {"best_product", combination_json(result.best_product)},
          {"best_f1", combination_json(result.best_f1)},
          {"same_argmax", result.best_product == result.best_f1},
          {"summary", means},
          {"table", rows}};
}

Json upper_bound_to_json(const UpperBoundResult& result, const UpperBoundParams& params) {
  Json curve = Json::array();
  for (const auto& c : result.curve) curve.push_back({{"p", c.p}, {"zero_fraction", c.zero_fraction}});
  return {{"sample_size", params.sample_size},
          {"stratum_size", params.stratum_size},
          {"cages_per_image", params.cages_per_image},
          {"trials", params.trials},
          {"target_prob", params.target_prob},
          {"seed", params.seed},
          {"rule", params.rule == BoundRule::largest_accepted ? "largest_accepted" : "smallest_rejected"},
          {"found", result.found},
          {"p_star", result.found ? Json(result.p_star) : Json(nullptr)},
          {"zero_fraction", result.found ? Json(result.zero_fraction) : Json(nullptr)},
          {"unrounded", result.unrounded},
          {"bound", result.bound},
          {"curve", curve}};
}

Json eval_report_to_json(const EvalReport& report) {
  Json strata = Json::array();
  for (const auto& s : report.strata) {
    strata.push_back({{"name", s.name},
                      {"population_size", s.population_size},
                      {"sampled_size", s.sampled_size},
                      {"predicate", s.predicate}});
  }
  Json doc = {{"cage", level_json(report.cage)},
              {"cluster", level_json(report.cluster)},
              {"strata", strata},
              {"other_type_predictions", report.other_type_predictions}};
  doc["upper_bound"] = nullptr;
  if (report.upper_bound) {
    const auto& u = *report.upper_bound;
    doc["upper_bound"] = {{"p_star", u.p_star}, {"bound", u.bound}, {"unrounded", u.unrounded}, {"found", u.found}};
  }
  return doc;
}

Json tonnage_to_json(std::span<const TonnageEstimate> estimates, std::size_t replicates) {
  Json periods = Json::array();
  for (const auto& e : estimates) {
    periods.push_back({{"period", label(e.period)},
                       {"mean", e.mean},
                       {"sd", e.sd},
                       {"B", replicates},
                       {"clusters", e.clusters},
                       {"other_cages", e.other_cages},
                       {"imputed_mean", e.imputed_mean},
                       {"imputed_component", e.imputed_mean - e.mean},
                       {"donor_period", e.donor ? Json(std::string(label(*e.donor))) : Json(nullptr)}});
  }
  return {{"unit", "tonnes/yr"}, {"B", replicates}, {"periods", periods}};
}

Json fao_comparison_to_json(std::span<const FaoComparisonRow> rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    out.push_back({{"period", label(r.period)},
                   {"fao_years", r.fao_years},
                   {"fao_available", r.fao_mean.has_value()},
                   {"fao_mean", optional_json(r.fao_mean)},
                   {"fao_sd", optional_json(r.fao_sd)},
                   {"model_mean", r.model_mean},
                   {"model_sd", r.model_sd},
                   {"imputed_mean", r.imputed_mean}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Replicate sidecar

namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

}  // namespace

void write_replicates(const fs::path& path, std::span<const TonnageEstimate> estimates) {
  const std::size_t rows = estimates.empty() ? 0 : estimates.front().replicates.size();
  for (const auto& e : estimates) {
    if (e.replicates.size() != rows) throw ArgumentError("replicate vectors differ in length");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  std::vector<char> buffer(rows * estimates.size() * 8);
  std::size_t at = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (const auto& e : estimates) {
      const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(e.replicates[r]));
      std::memcpy(buffer.data() + at, &bits, 8);
      at += 8;
    }
  }
  out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  if (!out) throw ConfigError("failed writing " + path.string());
}

std::vector<std::vector<double>> read_replicates(const fs::path& path, std::size_t columns) {
  if (columns == 0) throw ArgumentError("replicate sidecar needs at least one column");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % (8 * columns) != 0) {
    throw ValidationError(path.string() + ": size is not a multiple of " + std::to_string(columns) + " float64s");
  }
  const std::size_t rows = bytes.size() / (8 * columns);
  std::vector<std::vector<double>> out(rows, std::vector<double>(columns));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns; ++c) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, bytes.data() + (r * columns + c) * 8, 8);
      out[r][c] = std::bit_cast<double>(to_little_endian(bits));
    }
  }
  return out;
}

}  // namespace cagemap
