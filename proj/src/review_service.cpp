#include "cagemap/review_service.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <set>

#include <httplib.h>

#include "cagemap/errors.hpp"
#include "cagemap/rng.hpp"

namespace cagemap {

std::string_view to_string(ImageStratum stratum) noexcept {
  switch (stratum) {
    case ImageStratum::land: return "land";
    case ImageStratum::score_0_03: return "score_0_0.3";
    case ImageStratum::score_03_05: return "score_0.3_0.5";
    case ImageStratum::score_05_08: return "score_0.5_0.8";
    case ImageStratum::score_08_1: return "score_0.8_1";
    case ImageStratum::near_known: return "near_known";
    case ImageStratum::far: return "far";
  }
  return "far";
}

std::string_view describe(ImageStratum stratum) noexcept {
  switch (stratum) {
    case ImageStratum::land: return "land";
    case ImageStratum::score_0_03: return "not land, 0 <= max score < 0.3";
    case ImageStratum::score_03_05: return "not land, 0.3 <= max score < 0.5";
    case ImageStratum::score_05_08: return "not land, 0.5 <= max score < 0.8";
    case ImageStratum::score_08_1: return "not land, 0.8 <= max score <= 1";
    case ImageStratum::near_known: return "not land, no prediction, near known location";
    case ImageStratum::far: return "not land, no prediction, not near known location";
  }
  return "";
}

std::string_view to_string(TaskStatus status) noexcept { return status == TaskStatus::pending ? "pending" : "done"; }

namespace {

ImageStratum score_band(double s) {
  if (s < 0.3) return ImageStratum::score_0_03;
  if (s < 0.5) return ImageStratum::score_03_05;
  if (s < 0.8) return ImageStratum::score_05_08;
  return ImageStratum::score_08_1;
}

std::map<std::string, std::vector<const Detection*>> group_by_image(std::span<const Detection> detections) {
  std::map<std::string, std::vector<const Detection*>> out;
  for (const auto& d : detections) out[d.image_id].push_back(&d);
  return out;
}

double max_score(const std::vector<const Detection*>& dets) {
  double best = 0.0;
  for (const auto* d : dets) best = std::max(best, d->score.value_or(0.0));
  return best;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::map<std::string, ImageStratum> classify_images(std::span<const ImageRecord> images,
                                                    std::span<const Detection> detections, const LandMask& mask,
                                                    std::span<const Point> known_locations, double near_radius_m) {
  if (!(near_radius_m > 0.0) || !std::isfinite(near_radius_m)) {
    throw ArgumentError("near radius must be positive");
  }
  const auto preds = group_by_image(detections);
  std::map<std::string, ImageStratum> out;
  for (const auto& image : images) {
    ImageStratum s;
    if (mask.contains(image.frame)) {
      s = ImageStratum::land;
    } else if (auto it = preds.find(image.image_id); it != preds.end()) {
      s = score_band(max_score(it->second));
    } else {
      const bool near = std::any_of(known_locations.begin(), known_locations.end(),
                                    [&](Point p) { return distance(p, image.frame) <= near_radius_m; });
      s = near ? ImageStratum::near_known : ImageStratum::far;
    }
    if (!out.emplace(image.image_id, s).second) throw ArgumentError("duplicate image id " + image.image_id);
  }
  return out;
}

std::vector<StratumSpec> stratum_specs(const std::map<std::string, ImageStratum>& classification,
                                       const std::map<ImageStratum, std::size_t>& sampled) {
  std::vector<std::size_t> counts(kImageStrata, 0);
  for (const auto& [id, s] : classification) ++counts[static_cast<std::size_t>(s)];
  std::vector<StratumSpec> out;
  for (std::size_t i = 0; i < kImageStrata; ++i) {
    const auto s = static_cast<ImageStratum>(i);
    StratumSpec spec{std::string(to_string(s)), counts[i], 0, std::string(describe(s))};
    if (auto it = sampled.find(s); it != sampled.end()) spec.sampled_size = it->second;
    if (spec.sampled_size > spec.population_size) {
      throw ArgumentError("stratum " + spec.name + " samples more images than it holds");
    }
    out.push_back(std::move(spec));
  }
  return out;
}

std::vector<ReviewTask> build_queue(std::span<const ImageRecord> images, std::span<const Detection> detections,
                                    const LandMask& mask, std::span<const Point> known_locations,
                                    const QueueOptions& options) {
  if (!(options.far_sample_fraction >= 0.0 && options.far_sample_fraction <= 1.0)) {
    throw ArgumentError("far sample fraction must lie in [0, 1]");
  }
  const auto strata = classify_images(images, detections, mask, known_locations, options.near_radius_m);
  const auto preds = group_by_image(detections);

  std::vector<ReviewTask> tasks;
  std::vector<const ImageRecord*> far;
  for (const auto& image : images) {
    const ImageStratum s = strata.at(image.image_id);
    if (s == ImageStratum::land) continue;
    if (s == ImageStratum::far) {
      far.push_back(&image);
      continue;
    }
    ReviewTask t;
    t.id = image.image_id;
    t.image_id = image.image_id;
    t.tile_ref = image.tile_ref;
    t.year = image.year;
    t.stratum = std::string(to_string(s));
    if (auto it = preds.find(image.image_id); it != preds.end()) {
      for (const auto* d : it->second) t.predictions.push_back(*d);
      t.priority = max_score(it->second);
    }
    tasks.push_back(std::move(t));
  }

  std::sort(far.begin(), far.end(), [](const ImageRecord* a, const ImageRecord* b) { return a->image_id < b->image_id; });
  const auto take = static_cast<std::size_t>(std::llround(options.far_sample_fraction * static_cast<double>(far.size())));
  Rng rng = Rng::substream(options.seed, streams::kQueue, 0);
  for (std::size_t i = 0; i < take; ++i) {
    std::swap(far[i], far[i + rng.below(far.size() - i)]);
    ReviewTask t;
    t.id = far[i]->image_id;
    t.image_id = far[i]->image_id;
    t.tile_ref = far[i]->tile_ref;
    t.year = far[i]->year;
    t.stratum = std::string(to_string(ImageStratum::far));
    tasks.push_back(std::move(t));
  }

  std::sort(tasks.begin(), tasks.end(), [](const ReviewTask& a, const ReviewTask& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    return a.image_id < b.image_id;
  });
  return tasks;
}

BurdenReport burden_report(std::size_t queue_size, std::size_t population_size, std::size_t confirmed_cages,
                           std::int64_t bound_remainder) {
  if (queue_size > population_size) throw ArgumentError("queue is larger than the image population");
  BurdenReport r;
  r.queue_size = queue_size;
  r.population_size = population_size;
  r.fraction = population_size == 0 ? 0.0 : static_cast<double>(queue_size) / static_cast<double>(population_size);
  r.confirmed_cages = confirmed_cages;
  r.bound_remainder = bound_remainder;
  r.population_bound = static_cast<std::int64_t>(confirmed_cages) + bound_remainder;
  return r;
}

Json burden_to_json(const BurdenReport& r) {
  return {{"queue_size", r.queue_size},
          {"population_size", r.population_size},
          {"fraction", r.fraction},
          {"confirmed_cages", r.confirmed_cages},
          {"bound_remainder", r.bound_remainder},
          {"population_bound", r.population_bound}};
}

Json task_to_json(const ReviewTask& t) {
  Json preds = Json::array();
  for (const auto& d : t.predictions) {
    preds.push_back({{"id", d.id},
                     {"box", {d.box.min_x, d.box.min_y, d.box.max_x, d.box.max_y}},
                     {"cage_type", to_string(d.cage_type)},
                     {"score", d.score ? Json(*d.score) : Json(nullptr)}});
  }
  return {{"id", t.id},
          {"image_id", t.image_id},
          {"tile_ref", t.tile_ref},
          {"year", t.year},
          {"stratum", t.stratum},
          {"status", to_string(t.status)},
          {"priority", t.priority},
          {"head_record", t.head_record ? Json(*t.head_record) : Json(nullptr)},
          {"predictions", preds}};
}

// ---------------------------------------------------------------------------
// Service

ReviewService::ReviewService(std::vector<ReviewTask> tasks, ReviewLog& log, std::size_t population_size,
                             std::int64_t bound_remainder, std::chrono::seconds lease)
    : tasks_(std::move(tasks)),
      log_(log),
      population_size_(population_size),
      bound_remainder_(bound_remainder),
      lease_(lease) {
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (!index_.emplace(tasks_[i].id, i).second) throw ArgumentError("duplicate task id " + tasks_[i].id);
  }
  const auto records = log_.records();
  for (const auto& r : records) stored_.emplace(r.record_id, r);
  for (const auto& [image, head] : latest_records(records)) {
    auto it = index_.find(image);
    if (it == index_.end()) continue;
    tasks_[it->second].status = TaskStatus::done;
    tasks_[it->second].head_record = head.record_id;
  }
}

std::vector<ReviewTask> ReviewService::list(std::optional<TaskStatus> status, std::size_t limit,
                                            const std::string& session) {
  std::lock_guard lock(mutex_);
  const auto now = Clock::now();
  std::vector<ReviewTask> out;
  for (const auto& t : tasks_) {
    if (limit != 0 && out.size() >= limit) break;
    if (status && t.status != *status) continue;
    if (!session.empty()) {
      auto lease = leases_.find(t.id);
      if (lease != leases_.end() && lease->second.session != session && lease->second.expires > now) continue;
      leases_[t.id] = {session, now + lease_};
    }
    out.push_back(t);
  }
  return out;
}

ReviewTask ReviewService::get(const std::string& task_id) const {
  std::lock_guard lock(mutex_);
  auto it = index_.find(task_id);
  if (it == index_.end()) throw NotFoundError("no task " + task_id);
  return tasks_[it->second];
}

DecisionOutcome ReviewService::record_decision(const std::string& task_id, ReviewRecord record) {
  std::lock_guard lock(mutex_);
  auto it = index_.find(task_id);
  if (it == index_.end()) throw NotFoundError("no task " + task_id);
  ReviewTask& task = tasks_[it->second];
  if (record.image_id.empty()) record.image_id = task.image_id;
  if (record.image_id != task.image_id) {
    throw ValidationError("record is for image " + record.image_id + " but the task is " + task.image_id,
                          {record.record_id});
  }
  record.validate();

  if (auto prior = stored_.find(record.record_id); prior != stored_.end()) {
    const ReviewRecord& s = prior->second;
    const bool same = s.image_id == record.image_id && s.reviewer == record.reviewer &&
                      s.decision == record.decision && s.boxes == record.boxes &&
                      (!record.supersedes || record.supersedes == s.supersedes);
    if (!same) throw ConflictError("record id " + record.record_id + " was already used for a different decision");
    return {task, s, true};
  }

  if (!record.supersedes) {
    record.supersedes = task.head_record;
  } else if (record.supersedes != task.head_record) {
    throw ConflictError("record " + record.record_id + " supersedes " + *record.supersedes +
                        " but the current record for " + task.image_id + " is " +
                        task.head_record.value_or("none"));
  }
  if (record.timestamp.empty()) record.timestamp = utc_now();

  log_.append(record);
  stored_.emplace(record.record_id, record);
  task.status = TaskStatus::done;
  task.head_record = record.record_id;
  leases_.erase(task.id);
  return {task, record, false};
}

std::vector<Detection> ReviewService::export_annotations() const {
  std::lock_guard lock(mutex_);
  std::vector<Detection> predictions;
  std::map<std::string, int> years;
  for (const auto& t : tasks_) {
    predictions.insert(predictions.end(), t.predictions.begin(), t.predictions.end());
    years[t.image_id] = t.year;
  }
  return export_confirmed_annotations(log_.records(), predictions, PeriodMap::standard(), years);
}

BurdenReport ReviewService::burden() const {
  const std::size_t confirmed = export_annotations().size();
  std::lock_guard lock(mutex_);
  return burden_report(tasks_.size(), population_size_, confirmed, bound_remainder_);
}

std::size_t ReviewService::size() const {
  std::lock_guard lock(mutex_);
  return tasks_.size();
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

int status_for(const Error& e) {
  if (dynamic_cast<const NotFoundError*>(&e)) return 404;
  if (dynamic_cast<const ConflictError*>(&e) || dynamic_cast<const IntegrityError*>(&e)) return 409;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ArgumentError*>(&e)) return 400;
  return 500;
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_json(res, status_for(e), {{"code", e.code()}, {"message", e.what()}});
  } catch (const Json::exception& e) {
    send_json(res, 400, {{"code", "validation_error"}, {"message", e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"code", "internal"}, {"message", e.what()}});
  }
}

std::optional<TaskStatus> parse_status(const std::string& text) {
  if (text.empty() || text == "pending") return TaskStatus::pending;
  if (text == "done") return TaskStatus::done;
  if (text == "all") return std::nullopt;
  throw ArgumentError("status must be pending, done or all");
}

std::size_t parse_limit(const std::string& text) {
  if (text.empty()) return 0;
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || v < 0) throw ArgumentError("limit must be a non-negative integer");
  return static_cast<std::size_t>(v);
}

}  // namespace

std::unique_ptr<httplib::Server> make_review_server(ReviewService& service) {
  auto server = std::make_unique<httplib::Server>();
  server->set_default_headers({{"Access-Control-Allow-Origin", "*"},
                               {"Access-Control-Allow-Headers", "Content-Type"},
                               {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server->Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server->Get("/queue", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto status = parse_status(req.get_param_value("status"));
      const auto limit = parse_limit(req.get_param_value("limit"));
      Json tasks = Json::array();
      for (const auto& t : service.list(status, limit, req.get_param_value("session"))) tasks.push_back(task_to_json(t));
      send_json(res, 200, {{"count", tasks.size()}, {"tasks", tasks}});
    });
  });

  server->Get(R"(/task/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, task_to_json(service.get(req.matches[1]))); });
  });

  server->Post(R"(/task/([^/]+)/decision)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string task_id = req.matches[1];
      Json body = Json::parse(req.body);
      if (body.is_object() && !body.contains("image_id")) body["image_id"] = task_id;
      const auto outcome = service.record_decision(task_id, review_record_from_json(body));
      send_json(res, 200,
                {{"task", task_to_json(outcome.task)},
                 {"record", review_record_to_json(outcome.stored)},
                 {"replay", outcome.replay}});
    });
  });

  server->Get("/report/burden", [&service](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, burden_to_json(service.burden())); });
  });

  server->Get("/export/annotations", [&service](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, detections_to_geojson(service.export_annotations())); });
  });

  return server;
}

}  // namespace cagemap
