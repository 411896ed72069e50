#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cagemap/datastore.hpp"
#include "cagemap/evaluation.hpp"
#include "cagemap/geodata.hpp"
#include "cagemap/types.hpp"

namespace httplib {
class Server;
}

namespace cagemap {

/// Image population strata, in reporting order.
enum class ImageStratum {
  land,
  score_0_03,
  score_03_05,
  score_05_08,
  score_08_1,
  near_known,
  far,
};

inline constexpr std::size_t kImageStrata = 7;

std::string_view to_string(ImageStratum stratum) noexcept;
std::string_view describe(ImageStratum stratum) noexcept;

/// Stratum of every image: fully on land, otherwise by maximum prediction
/// score band, otherwise by distance to the nearest known site.
std::map<std::string, ImageStratum> classify_images(std::span<const ImageRecord> images,
                                                    std::span<const Detection> detections,
                                                    const LandMask& mask,
                                                    std::span<const Point> known_locations,
                                                    double near_radius_m);

/// Population counts per stratum; `sampled` gives the annotated images per
/// stratum (absent strata count as unsampled).
std::vector<StratumSpec> stratum_specs(const std::map<std::string, ImageStratum>& classification,
                                       const std::map<ImageStratum, std::size_t>& sampled = {});

enum class TaskStatus { pending, done };

std::string_view to_string(TaskStatus status) noexcept;

struct ReviewTask {
  std::string id;  // equals the image id
  std::string image_id;
  std::string tile_ref;
  int year = 0;
  std::vector<Detection> predictions;
  std::string stratum;
  TaskStatus status = TaskStatus::pending;
  double priority = 0.0;
  std::optional<std::string> head_record;  // record currently standing for the image
};

struct QueueOptions {
  double near_radius_m = 1000.0;
  double far_sample_fraction = 0.01;
  std::uint64_t seed = 0;
};

/// Review queue: every non-land image with a prediction, every prediction-free
/// ocean image within the near radius of a known site, and a seeded sample of
/// round(fraction * n) of the remaining ocean images. Ordered by priority
/// (maximum score; 0 without predictions) descending, then image id.
std::vector<ReviewTask> build_queue(std::span<const ImageRecord> images,
                                    std::span<const Detection> detections, const LandMask& mask,
                                    std::span<const Point> known_locations,
                                    const QueueOptions& options);

struct BurdenReport {
  std::size_t queue_size = 0;
  std::size_t population_size = 0;
  double fraction = 0.0;
  std::size_t confirmed_cages = 0;
  std::int64_t bound_remainder = 0;
  std::int64_t population_bound = 0;
};

BurdenReport burden_report(std::size_t queue_size, std::size_t population_size,
                           std::size_t confirmed_cages, std::int64_t bound_remainder);

Json burden_to_json(const BurdenReport& report);
Json task_to_json(const ReviewTask& task);

struct DecisionOutcome {
  ReviewTask task;
  ReviewRecord stored;  // record as appended (supersedes filled in)
  bool replay = false;  // identical record id and payload already applied
};

/// Thread-safe review queue over an append-only log.
///
/// Reads run concurrently; decisions are serialized. A decision without
/// `supersedes` chains onto the task's current head; a decision naming a
/// stale head is refused with ConflictError. Re-sending a stored record is a
/// no-op. Passing a session to `pending` leases the returned tasks to it so
/// other sessions are not handed the same work.
class ReviewService {
 public:
  ReviewService(std::vector<ReviewTask> tasks, ReviewLog& log, std::size_t population_size,
                std::int64_t bound_remainder,
                std::chrono::seconds lease = std::chrono::seconds(300));

  /// Tasks in queue order; limit 0 means no limit.
  std::vector<ReviewTask> list(std::optional<TaskStatus> status, std::size_t limit,
                               const std::string& session = {});
  ReviewTask get(const std::string& task_id) const;
  DecisionOutcome record_decision(const std::string& task_id, ReviewRecord record);
  std::vector<Detection> export_annotations() const;
  BurdenReport burden() const;
  std::size_t size() const;

 private:
  using Clock = std::chrono::steady_clock;

  struct Lease {
    std::string session;
    Clock::time_point expires;
  };

  std::vector<ReviewTask> tasks_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, Lease> leases_;
  std::map<std::string, ReviewRecord> stored_;
  ReviewLog& log_;
  std::size_t population_size_;
  std::int64_t bound_remainder_;
  std::chrono::seconds lease_;
  mutable std::mutex mutex_;
};

/// HTTP+JSON front end:
///   GET  /queue?status=pending&limit=N[&session=S]
///   GET  /task/{id}
///   POST /task/{id}/decision
///   GET  /report/burden
///   GET  /export/annotations
/// Errors answer 400/404/409 with {"code": ..., "message": ...}.
std::unique_ptr<httplib::Server> make_review_server(ReviewService& service);

}  // namespace cagemap
