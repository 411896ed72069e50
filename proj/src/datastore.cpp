#include "cagemap/datastore.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "cagemap/errors.hpp"

namespace cagemap {

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return in;
}

// Line of every object that opens directly inside the top-level "features"
// array, in order. nlohmann::json does not keep source positions.
std::vector<std::size_t> feature_lines(const std::string& text) {
  struct Frame {
    char kind;
    std::string last_key;
    bool features = false;
  };
  std::vector<Frame> stack;
  std::vector<std::size_t> lines;
  std::size_t line = 1;
  std::string token;
  bool in_string = false;
  bool escape = false;
  bool expect_key_value = false;
  for (char c : text) {
    if (c == '\n') ++line;
    if (in_string) {
      if (escape) {
        escape = false;
        token += c;
      } else if (c == '\\') {
        escape = true;
      } else if (c == '"') {
        in_string = false;
        if (!stack.empty() && stack.back().kind == '{' && !expect_key_value) stack.back().last_key = token;
      } else {
        token += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_string = true;
        token.clear();
        break;
      case ':':
        expect_key_value = true;
        break;
      case ',':
        expect_key_value = false;
        break;
      case '{':
        if (!stack.empty() && stack.back().features) lines.push_back(line);
        stack.push_back({'{', {}, false});
        expect_key_value = false;
        break;
      case '[': {
        const bool features = stack.size() == 1 && stack.back().kind == '{' && stack.back().last_key == "features";
        stack.push_back({'[', {}, features});
        expect_key_value = false;
        break;
      }
      case '}':
      case ']':
        if (!stack.empty()) stack.pop_back();
        expect_key_value = !stack.empty() && stack.back().kind == '{';
        break;
      default:
        break;
    }
  }
  return lines;
}

std::string crs_of(const Json& doc) {
  auto it = doc.find("crs");
  if (it == doc.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  if (it->is_object() && it->contains("properties") && (*it)["properties"].contains("name")) {
    return (*it)["properties"]["name"].get<std::string>();
  }
  throw ValidationError("unrecognised crs member");
}

Json crs_to_json(const std::string& crs) { return {{"type", "name"}, {"properties", {{"name", crs}}}}; }

std::optional<std::string> id_text(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  return std::nullopt;
}

Json rect_to_json(const GeoRect& r) { return Json::array({r.min_x, r.min_y, r.max_x, r.max_y}); }

GeoRect rect_from_json(const Json& v) {
  if (!v.is_array() || v.size() != 4) throw ValidationError("box must be [min_x, min_y, max_x, max_y]");
  for (const auto& x : v) {
    if (!x.is_number()) throw ValidationError("box coordinates must be numbers");
  }
  try {
    return GeoRect::make(v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>());
  } catch (const ArgumentError& e) {
    throw ValidationError(e.what());
  }
}

// Axis-aligned rectangle from a GeoJSON Polygon ring.
GeoRect rect_from_polygon(const Json& geometry) {
  if (!geometry.is_object() || geometry.value("type", "") != "Polygon") {
    throw ValidationError("geometry must be a Polygon");
  }
  const auto& coords = geometry.at("coordinates");
  if (!coords.is_array() || coords.size() != 1 || !coords[0].is_array()) {
    throw ValidationError("rectangle polygon must have exactly one ring");
  }
  const auto& ring = coords[0];
  if (ring.size() != 5) throw ValidationError("rectangle ring must have 5 positions");
  std::vector<Point> pts;
  for (const auto& p : ring) {
    if (!p.is_array() || p.size() < 2 || !p[0].is_number() || !p[1].is_number()) {
      throw ValidationError("ring positions must be [x, y]");
    }
    pts.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  if (!(pts.front() == pts.back())) throw ValidationError("ring is not closed");
  std::set<double> xs;
  std::set<double> ys;
  std::set<std::pair<double, double>> corners;
  for (std::size_t i = 0; i < 4; ++i) {
    xs.insert(pts[i].x);
    ys.insert(pts[i].y);
    corners.insert({pts[i].x, pts[i].y});
  }
  if (xs.size() != 2 || ys.size() != 2 || corners.size() != 4) {
    throw ValidationError("geometry is not an axis-aligned rectangle");
  }
  // Consecutive vertices must share one coordinate (no diagonal edges).
  for (std::size_t i = 0; i < 4; ++i) {
    if (pts[i].x != pts[i + 1].x && pts[i].y != pts[i + 1].y) {
      throw ValidationError("geometry is not an axis-aligned rectangle");
    }
  }
  try {
    return GeoRect::make(*xs.begin(), *ys.begin(), *xs.rbegin(), *ys.rbegin());
  } catch (const ArgumentError& e) {
    throw ValidationError(e.what());
  }
}

Json rect_to_polygon(const GeoRect& r) {
  return {{"type", "Polygon"},
          {"coordinates",
           Json::array({Json::array({Json::array({r.min_x, r.min_y}), Json::array({r.max_x, r.min_y}),
                                     Json::array({r.max_x, r.max_y}), Json::array({r.min_x, r.max_y}),
                                     Json::array({r.min_x, r.min_y})})})}};
}

Detection feature_to_detection(const Json& feature, const PeriodMap& periods, std::string& id) {
  if (!feature.is_object() || feature.value("type", "") != "Feature") throw ValidationError("not a Feature");
  const Json props = feature.value("properties", Json::object());
  if (!props.is_object()) throw ValidationError("properties must be an object");
  std::optional<std::string> fid;
  if (feature.contains("id")) fid = id_text(feature["id"]);
  if (!fid && props.contains("id")) fid = id_text(props["id"]);
  if (!fid || fid->empty()) throw ValidationError("missing id");
  id = *fid;

  Detection d;
  d.id = *fid;
  if (!feature.contains("geometry")) throw ValidationError("missing geometry");
  d.box = rect_from_polygon(feature["geometry"]);

  if (!props.contains("cage_type") || !props["cage_type"].is_string()) throw ValidationError("missing cage_type");
  auto type = parse_cage_type(props["cage_type"].get<std::string>());
  if (!type) throw ValidationError("unknown cage_type '" + props["cage_type"].get<std::string>() + "'");
  d.cage_type = *type;

  if (props.contains("score") && !props["score"].is_null()) {
    if (!props["score"].is_number()) throw ValidationError("score must be a number");
    const double s = props["score"].get<double>();
    if (!(s >= 0.0 && s <= 1.0)) {
      std::ostringstream os;
      os << "score " << s << " outside [0, 1]";
      throw ValidationError(os.str());
    }
    d.score = s;
  }
  if (!props.contains("image_id")) throw ValidationError("missing image_id");
  auto image = id_text(props["image_id"]);
  if (!image || image->empty()) throw ValidationError("image_id must be a non-empty string");
  d.image_id = *image;

  if (!props.contains("year") || !props["year"].is_number_integer()) throw ValidationError("missing integer year");
  d.year = props["year"].get<int>();
  const auto mapped = periods.find(d.year);
  if (props.contains("period") && !props["period"].is_null()) {
    if (!props["period"].is_string()) throw ValidationError("period must be a string");
    auto p = parse_period(props["period"].get<std::string>());
    if (!p) throw ValidationError("unknown period '" + props["period"].get<std::string>() + "'");
    if (mapped && *mapped != *p) {
      throw ValidationError("period " + std::string(label(*p)) + " inconsistent with year " + std::to_string(d.year));
    }
    d.period = *p;
  } else if (mapped) {
    d.period = *mapped;
  } else {
    throw ValidationError("year " + std::to_string(d.year) + " maps to no period");
  }
  if (props.contains("image_frame") && !props["image_frame"].is_null()) {
    d.image_frame = rect_from_json(props["image_frame"]);
  }
  return d;
}

}  // namespace

DetectionFile parse_detections(const std::string& text, const PeriodMap& periods) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("detections: malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
      !doc["features"].is_array()) {
    throw ValidationError("detections: expected a GeoJSON FeatureCollection");
  }
  DetectionFile out;
  out.crs = crs_of(doc);
  const auto lines = feature_lines(text);
  std::vector<std::string> offending;
  std::vector<std::string> messages;
  std::set<std::string> seen;
  const auto& features = doc["features"];
  for (std::size_t i = 0; i < features.size(); ++i) {
    std::string id;
    const std::string where =
        i < lines.size() ? " (line " + std::to_string(lines[i]) + ")" : " (feature " + std::to_string(i) + ")";
    try {
      Detection d = feature_to_detection(features[i], periods, id);
      if (!seen.insert(d.id).second) throw ValidationError("duplicate id");
      out.detections.push_back(std::move(d));
    } catch (const ValidationError& e) {
      const std::string name = id.empty() ? "#" + std::to_string(i) : id;
      offending.push_back(name);
      messages.push_back("feature " + name + where + ": " + e.what());
    } catch (const Json::exception& e) {
      const std::string name = id.empty() ? "#" + std::to_string(i) : id;
      offending.push_back(name);
      messages.push_back("feature " + name + where + ": " + e.what());
    }
  }
  if (!offending.empty()) {
    std::string message = "detections: " + std::to_string(offending.size()) + " invalid feature(s)";
    for (const auto& m : messages) message += "\n  " + m;
    throw ValidationError(message, offending);
  }
  return out;
}

DetectionFile read_detection_file(const fs::path& path, const PeriodMap& periods) {
  try {
    return parse_detections(read_text(path), periods);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what(), e.offending());
  }
}

std::vector<Detection> load_detections(const fs::path& path, const PeriodMap& periods) {
  return read_detection_file(path, periods).detections;
}

Json detections_to_geojson(std::span<const Detection> detections, const std::string& crs) {
  Json features = Json::array();
  for (const auto& d : detections) {
    Json props = {{"cage_type", to_string(d.cage_type)},
                  {"image_id", d.image_id},
                  {"year", d.year},
                  {"period", label(d.period)}};
    if (d.score) props["score"] = *d.score;
    if (d.image_frame) props["image_frame"] = rect_to_json(*d.image_frame);
    features.push_back({{"type", "Feature"}, {"id", d.id}, {"geometry", rect_to_polygon(d.box)}, {"properties", props}});
  }
  Json doc = {{"type", "FeatureCollection"}, {"features", features}};
  if (!crs.empty()) doc["crs"] = crs_to_json(crs);
  return doc;
}

void save_detections(const fs::path& path, std::span<const Detection> detections, const std::string& crs) {
  write_json(path, detections_to_geojson(detections, crs));
}

// ---------------------------------------------------------------------------
// Land mask

namespace {

Ring ring_from_json(const Json& v) {
  if (!v.is_array()) throw ValidationError("polygon ring must be an array");
  Ring ring;
  for (const auto& p : v) {
    if (!p.is_array() || p.size() < 2 || !p[0].is_number() || !p[1].is_number()) {
      throw ValidationError("ring positions must be [x, y]");
    }
    ring.points.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return ring;
}

Polygon polygon_from_json(const Json& rings) {
  if (!rings.is_array() || rings.empty()) throw ValidationError("polygon needs at least one ring");
  Polygon poly;
  poly.outer = ring_from_json(rings[0]);
  for (std::size_t i = 1; i < rings.size(); ++i) poly.holes.push_back(ring_from_json(rings[i]));
  return poly;
}

void collect_polygons(const Json& geometry, std::vector<Polygon>& out) {
  const std::string type = geometry.value("type", "");
  if (type == "Polygon") {
    out.push_back(polygon_from_json(geometry.at("coordinates")));
  } else if (type == "MultiPolygon") {
    for (const auto& rings : geometry.at("coordinates")) out.push_back(polygon_from_json(rings));
  } else if (type == "GeometryCollection") {
    for (const auto& g : geometry.at("geometries")) collect_polygons(g, out);
  } else {
    throw ValidationError("land mask geometry must be Polygon or MultiPolygon, got '" + type + "'");
  }
}

}  // namespace

LandMask land_mask_from_geojson(const Json& doc) {
  std::vector<Polygon> polygons;
  try {
    const std::string type = doc.value("type", "");
    if (type == "FeatureCollection") {
      for (const auto& f : doc.at("features")) collect_polygons(f.at("geometry"), polygons);
    } else if (type == "Feature") {
      collect_polygons(doc.at("geometry"), polygons);
    } else {
      collect_polygons(doc, polygons);
    }
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("land mask: ") + e.what());
  }
  return LandMask(std::move(polygons), crs_of(doc));
}

LandMask load_land_mask(const fs::path& path) {
  Json doc;
  try {
    doc = Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON: " + e.what());
  }
  try {
    return land_mask_from_geojson(doc);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what(), e.offending());
  }
}

// ---------------------------------------------------------------------------
// ESRI ASCII grid

BathymetrySampler parse_esri_ascii(std::istream& in, bool negate) {
  std::map<std::string, double> header;
  std::string key;
  // Header lines are "key value"; the first numeric token starts the data.
  while (in >> std::ws && in.peek() != EOF && std::isalpha(in.peek())) {
    double value = 0.0;
    in >> key;
    if (!(in >> value)) throw ValidationError("esri ascii: header value for '" + key + "' is not numeric");
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    header[key] = value;
  }
  auto need = [&](const char* k) {
    auto it = header.find(k);
    if (it == header.end()) throw ValidationError(std::string("esri ascii: missing header ") + k);
    return it->second;
  };
  const double ncols = need("ncols");
  const double nrows = need("nrows");
  const double cell = need("cellsize");
  if (!(ncols >= 1) || !(nrows >= 1) || ncols != std::floor(ncols) || nrows != std::floor(nrows)) {
    throw ValidationError("esri ascii: ncols and nrows must be positive integers");
  }
  double x0 = 0.0;
  double y0 = 0.0;
  if (header.contains("xllcorner")) {
    x0 = header["xllcorner"];
  } else if (header.contains("xllcenter")) {
    x0 = header["xllcenter"] - cell / 2.0;
  } else {
    throw ValidationError("esri ascii: missing header xllcorner");
  }
  if (header.contains("yllcorner")) {
    y0 = header["yllcorner"];
  } else if (header.contains("yllcenter")) {
    y0 = header["yllcenter"] - cell / 2.0;
  } else {
    throw ValidationError("esri ascii: missing header yllcorner");
  }
  std::optional<double> nodata;
  if (header.contains("nodata_value")) nodata = header["nodata_value"];

  const auto cols = static_cast<std::size_t>(ncols);
  const auto rows = static_cast<std::size_t>(nrows);
  std::vector<double> values;
  values.reserve(cols * rows);
  std::string tok;
  while (in >> tok) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw ValidationError("esri ascii: non-numeric cell value '" + tok + "' at cell " +
                            std::to_string(values.size()));
    }
    values.push_back(v);
  }
  if (values.size() != cols * rows) {
    throw ValidationError("esri ascii: expected " + std::to_string(cols * rows) + " cell values, found " +
                          std::to_string(values.size()));
  }
  if (negate) {
    for (auto& v : values) {
      if (!(nodata && v == *nodata)) v = -v;
    }
  }
  try {
    return BathymetrySampler(x0, y0, cell, cols, rows, std::move(values), nodata);
  } catch (const ArgumentError& e) {
    throw ValidationError(std::string("esri ascii: ") + e.what());
  }
}

BathymetrySampler load_bathymetry(const fs::path& path, bool negate) {
  auto in = open_input(path);
  try {
    return parse_esri_ascii(in, negate);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV tables

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

template <typename T>
std::optional<T> parse_number(const std::string& s) {
  T v{};
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(e[-1]))) --e;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || b == e) return std::nullopt;
  return v;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::vector<StratumSpec> parse_strata_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<StratumSpec> out;
  std::set<std::string> names;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    auto f = split_csv_line(line);
    if (!header) {
      header = true;
      if (f.size() >= 3 && f[0] == "name") continue;
    }
    const std::string where = "strata line " + std::to_string(line_no) + ": ";
    if (f.size() != 4) throw ValidationError(where + "expected name,population_size,sampled_size,predicate");
    auto pop = parse_number<std::size_t>(f[1]);
    auto sampled = parse_number<std::size_t>(f[2]);
    if (!pop || !sampled) throw ValidationError(where + "sizes must be non-negative integers");
    if (*sampled > *pop) throw ValidationError(where + "sampled_size exceeds population_size");
    if (f[0].empty() || !names.insert(f[0]).second) throw ValidationError(where + "empty or duplicate name");
    out.push_back({f[0], *pop, *sampled, f[3]});
  }
  return out;
}

std::vector<StratumSpec> load_strata(const fs::path& path) {
  auto in = open_input(path);
  return parse_strata_csv(in);
}

void save_strata(const fs::path& path, std::span<const StratumSpec> strata) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "name,population_size,sampled_size,predicate\n";
  for (const auto& s : strata) {
    out << csv_field(s.name) << ',' << s.population_size << ',' << s.sampled_size << ',' << csv_field(s.predicate)
        << '\n';
  }
}

std::map<int, double> parse_fao_csv(std::istream& in) {
  std::map<int, double> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    auto f = split_csv_line(line);
    const std::string where = "fao line " + std::to_string(line_no) + ": ";
    if (f.size() != 2) throw ValidationError(where + "expected year,tonnes");
    auto year = parse_number<int>(f[0]);
    if (!year && line_no == 1) continue;  // header
    auto tonnes = parse_number<double>(f[1]);
    if (!year || !tonnes || !std::isfinite(*tonnes) || *tonnes < 0.0) {
      throw ValidationError(where + "expected an integer year and non-negative tonnes");
    }
    if (!out.emplace(*year, *tonnes).second) throw ValidationError(where + "duplicate year");
  }
  return out;
}

std::map<int, double> load_fao_series(const fs::path& path) {
  auto in = open_input(path);
  return parse_fao_csv(in);
}

std::vector<Point> load_known_locations(const fs::path& path) {
  auto in = open_input(path);
  std::vector<Point> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    auto f = split_csv_line(line);
    auto x = f.size() == 2 ? parse_number<double>(f[0]) : std::nullopt;
    auto y = f.size() == 2 ? parse_number<double>(f[1]) : std::nullopt;
    if (!x || !y) {
      if (line_no == 1) continue;  // header
      throw ValidationError(path.string() + " line " + std::to_string(line_no) + ": expected x,y");
    }
    out.push_back({*x, *y});
  }
  return out;
}

std::vector<ImageRecord> parse_images_csv(std::istream& in) {
  std::vector<ImageRecord> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    auto f = split_csv_line(line);
    if (!header) {
      header = true;
      if (f.empty() || f[0] != "image_id") throw ValidationError("images: header must start with image_id");
      continue;
    }
    const std::string where = "images line " + std::to_string(line_no) + ": ";
    if (f.size() != 7) throw ValidationError(where + "expected image_id,min_x,min_y,max_x,max_y,year,tile_ref");
    ImageRecord r;
    r.image_id = f[0];
    if (r.image_id.empty() || !seen.insert(r.image_id).second) {
      throw ValidationError(where + "empty or duplicate image_id", {r.image_id});
    }
    double c[4];
    for (int i = 0; i < 4; ++i) {
      auto v = parse_number<double>(f[1 + i]);
      if (!v) throw ValidationError(where + "frame coordinates must be numbers", {r.image_id});
      c[i] = *v;
    }
    try {
      r.frame = GeoRect::make(c[0], c[1], c[2], c[3]);
    } catch (const ArgumentError& e) {
      throw ValidationError(where + e.what(), {r.image_id});
    }
    auto year = parse_number<int>(f[5]);
    if (!year) throw ValidationError(where + "year must be an integer", {r.image_id});
    r.year = *year;
    r.tile_ref = f[6];
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ImageRecord> load_images(const fs::path& path) {
  auto in = open_input(path);
  try {
    return parse_images_csv(in);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what(), e.offending());
  }
}

// ---------------------------------------------------------------------------
// Factor configuration

namespace {

Period period_key(const std::string& text) {
  auto p = parse_period(text);
  if (!p) throw ConfigError("unknown period '" + text + "'");
  return *p;
}

void reject_unknown(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

CageType area_type(const std::string& text) {
  auto t = parse_cage_type(text);
  if (!t || *t == CageType::other) throw ConfigError("area error type must be circular or square");
  return *t;
}

}  // namespace

FactorModel FactorConfig::build(const AreaErrorModel& fitted_errors) const {
  FactorModel model;
  model.depth = depth;
  model.stocking_lower = stocking_lower;
  model.stocking_upper = stocking_upper;
  model.area_errors = area_errors ? *area_errors : fitted_errors;
  for (const auto& [period, share] : shares) {
    try {
      model.periods[period] = species_weighted_params(species, share);
    } catch (const ArgumentError& e) {
      throw ConfigError(std::string(label(period)) + ": " + e.what());
    }
  }
  model.validate();
  return model;
}

FactorConfig factor_config_from_json(const Json& doc) {
  if (!doc.is_object()) throw ConfigError("factor config must be a JSON object");
  reject_unknown(doc,
                 {"kappa", "depth_floor_m", "depth_fallback_m", "depth_sd_scale", "stocking", "species", "shares",
                  "imputation_rules", "B", "seed", "area_errors"},
                 "factor config");
  FactorConfig c;
  try {
    c.depth.kappa = doc.value("kappa", c.depth.kappa);
    c.depth.floor_m = doc.value("depth_floor_m", c.depth.floor_m);
    c.depth.fallback_m = doc.value("depth_fallback_m", c.depth.fallback_m);
    c.depth.sd_scale = doc.value("depth_sd_scale", c.depth.sd_scale);
    if (doc.contains("stocking")) {
      reject_unknown(doc["stocking"], {"a", "b"}, "stocking");
      c.stocking_lower = doc["stocking"].value("a", c.stocking_lower);
      c.stocking_upper = doc["stocking"].value("b", c.stocking_upper);
    }
    if (doc.contains("species")) {
      for (const auto& s : doc["species"]) {
        reject_unknown(s, {"name", "stocking_mean", "stocking_sd", "harvest_mean", "harvest_sd"}, "species");
        c.species.push_back({s.at("name").get<std::string>(), s.at("stocking_mean").get<double>(),
                             s.at("stocking_sd").get<double>(), s.at("harvest_mean").get<double>(),
                             s.at("harvest_sd").get<double>()});
      }
    } else {
      c.species = reference_species();
    }
    if (doc.contains("shares")) {
      for (const auto& [period, shares] : doc["shares"].items()) {
        auto& dst = c.shares[period_key(period)];
        for (const auto& [name, w] : shares.items()) dst[name] = w.get<double>();
      }
    }
    if (doc.contains("imputation_rules")) {
      c.imputation_rules.clear();
      for (const auto& r : doc["imputation_rules"]) {
        reject_unknown(r, {"target", "donor"}, "imputation rule");
        c.imputation_rules.push_back(
            {period_key(r.at("target").get<std::string>()), period_key(r.at("donor").get<std::string>())});
      }
    }
    c.replicates = doc.value("B", c.replicates);
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("area_errors") && !doc["area_errors"].is_null()) {
      const auto& ae = doc["area_errors"];
      reject_unknown(ae, {"cells", "pooled"}, "area_errors");
      AreaErrorModel model;
      for (const auto& cell : ae.value("cells", Json::array())) {
        reject_unknown(cell, {"type", "period", "mean", "sd"}, "area error cell");
        model.cells[{area_type(cell.at("type").get<std::string>()), period_key(cell.at("period").get<std::string>())}] =
            {cell.at("mean").get<double>(), cell.at("sd").get<double>()};
      }
      for (const auto& cell : ae.value("pooled", Json::array())) {
        reject_unknown(cell, {"type", "mean", "sd"}, "pooled area error");
        model.pooled[area_type(cell.at("type").get<std::string>())] = {cell.at("mean").get<double>(),
                                                                        cell.at("sd").get<double>()};
      }
      for (const auto& [k, v] : model.cells) {
        if (!(v.sd >= 0.0)) throw ConfigError("area error sd must be non-negative");
      }
      for (const auto& [k, v] : model.pooled) {
        if (!(v.sd >= 0.0)) throw ConfigError("area error sd must be non-negative");
      }
      c.area_errors = std::move(model);
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("factor config: ") + e.what());
  }
  if (c.replicates < 1) throw ConfigError("factor config: B must be at least 1");
  c.depth.validate();
  return c;
}

Json factor_config_to_json(const FactorConfig& c) {
  Json species = Json::array();
  for (const auto& s : c.species) {
    species.push_back({{"name", s.name},
                       {"stocking_mean", s.stocking_mean},
                       {"stocking_sd", s.stocking_sd},
                       {"harvest_mean", s.harvest_mean},
                       {"harvest_sd", s.harvest_sd}});
  }
  Json shares = Json::object();
  for (const auto& [period, m] : c.shares) {
    Json row = Json::object();
    for (const auto& [name, w] : m) row[name] = w;
    shares[std::string(label(period))] = row;
  }
  Json rules = Json::array();
  for (const auto& r : c.imputation_rules) rules.push_back({{"target", label(r.target)}, {"donor", label(r.donor)}});
  Json doc = {{"kappa", c.depth.kappa},
              {"depth_floor_m", c.depth.floor_m},
              {"depth_fallback_m", c.depth.fallback_m},
              {"depth_sd_scale", c.depth.sd_scale},
              {"stocking", {{"a", c.stocking_lower}, {"b", c.stocking_upper}}},
              {"species", species},
              {"shares", shares},
              {"imputation_rules", rules},
              {"B", c.replicates},
              {"seed", c.seed}};
  if (c.area_errors) {
    Json cells = Json::array();
    for (const auto& [k, v] : c.area_errors->cells) {
      cells.push_back({{"type", to_string(k.first)}, {"period", label(k.second)}, {"mean", v.mean}, {"sd", v.sd}});
    }
    Json pooled = Json::array();
    for (const auto& [t, v] : c.area_errors->pooled) {
      pooled.push_back({{"type", to_string(t)}, {"mean", v.mean}, {"sd", v.sd}});
    }
    doc["area_errors"] = {{"cells", cells}, {"pooled", pooled}};
  }
  return doc;
}

FactorConfig load_factor_config(const fs::path& path) {
  try {
    return factor_config_from_json(read_json(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_factor_config(const fs::path& path, const FactorConfig& config) {
  write_json(path, factor_config_to_json(config));
}

CoverageMap coverage_from_json(const Json& doc) {
  if (!doc.is_object()) throw ConfigError("coverage map must be a JSON object keyed by period");
  CoverageMap map;
  try {
    for (const auto& [period, tiles] : doc.items()) {
      auto& dst = map.missing[period_key(period)];
      for (const auto& t : tiles) {
        if (!t.is_array() || t.size() != 2) throw ConfigError("coverage tiles must be [col, row]");
        dst.insert({t[0].get<std::int64_t>(), t[1].get<std::int64_t>()});
      }
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("coverage map: ") + e.what());
  }
  return map;
}

Json coverage_to_json(const CoverageMap& coverage) {
  Json doc = Json::object();
  for (const auto& [period, tiles] : coverage.missing) {
    Json list = Json::array();
    for (const auto& t : tiles) list.push_back({t.col, t.row});
    doc[std::string(label(period))] = list;
  }
  return doc;
}

// ---------------------------------------------------------------------------
// JSON files

void write_json(const fs::path& path, const Json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw ConfigError("failed writing " + path.string());
}

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON: " + e.what());
  }
}

}  // namespace cagemap
