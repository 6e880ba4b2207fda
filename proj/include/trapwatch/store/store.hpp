#pragma once

#include <cstdint>
#include <filesystem>
#include <chrono>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trapwatch/core/alerting.hpp"
#include "trapwatch/core/types.hpp"

struct sqlite3;

namespace trapwatch::store {

struct PutResult {
  std::string asset_id;
  std::vector<std::string> detection_ids;
  std::int64_t sequence = 0;
  /// The content was already stored; ids are the original ones.
  bool duplicate = false;
};

struct DetectionFilter {
  std::optional<std::string> camera_id;
  std::optional<int> class_id;
  std::optional<Timestamp> from;  // received_at >= from
  std::optional<Timestamp> to;    // received_at < to
  std::optional<double> min_confidence;
  std::optional<bool> verified;
  std::size_t limit = 50;
  std::optional<std::string> cursor;
};

inline constexpr std::size_t kMaxPageSize = 500;

/// Generic page over any ordered collection, keyed by an opaque cursor.
template <typename T>
struct Page {
  std::vector<T> items;
  std::optional<std::string> next_cursor;
};

using DetectionPage = Page<Detection>;

struct BlankStats {
  std::int64_t total_assets = 0;
  std::int64_t blank_assets = 0;
  /// nullopt when there are no assets.
  std::optional<double> blank_fraction;
};

struct VerdictRecord {
  std::int64_t sequence = 0;
  std::string detection_id;
  HumanVerdict verdict;
};

struct QuarantineEntry {
  std::int64_t sequence = 0;
  std::string entry_id;
  std::string reason;
  std::string sender;
  std::string path;
  Timestamp received_at{};
};

struct AlertFilter {
  std::optional<std::string> rule_id;
  std::optional<DeliveryState> status;
  std::size_t limit = 50;
  std::optional<std::string> cursor;
};

using AlertPage = Page<AlertEvent>;

/// Everything an alert evaluation needs about one stored asset.
struct AlertContext {
  ImageAsset asset;
  std::vector<Detection> detections;
  std::vector<AlertRule> rules;
  /// Earlier alerts that could fall inside a cooldown window.
  std::vector<AlertEvent> recent;
};

using AlertEvaluator = std::function<std::vector<AlertEvent>(const AlertContext&)>;

/// Durable metadata in SQLite plus a content-addressed blob directory.
/// All calls are serialized on one connection, so every operation is
/// atomic and linearizable.
class EventStore {
 public:
  /// Creates `dir` and the schema if missing.
  static std::unique_ptr<EventStore> open(const std::filesystem::path& dir);
  ~EventStore();
  EventStore(const EventStore&) = delete;
  EventStore& operator=(const EventStore&) = delete;

  const std::filesystem::path& directory() const noexcept { return dir_; }

  // Blobs.
  /// `blobs/<2hex>/<hash>.<ext>`, relative to the store directory.
  static std::string blob_key(std::string_view content_hash, std::string_view ext);
  /// Atomic write; a second write of the same key is a no-op.
  void put_blob(std::string_view key, std::string_view bytes);
  std::optional<std::string> read_blob(std::string_view key) const;
  std::filesystem::path blob_path(std::string_view key) const;

  // Assets and detections.
  /// Atomic and idempotent on content hash. Detections must reference the
  /// asset (Errc::integrity_violation otherwise).
  PutResult put_asset(const ImageAsset& asset, const std::vector<Detection>& detections);
  /// Adds detections to an existing asset in one transaction.
  std::vector<std::string> put_detections(std::string_view asset_id,
                                          const std::vector<Detection>& detections);
  std::optional<ImageAsset> find_asset_by_hash(std::string_view content_hash) const;
  std::optional<ImageAsset> get_asset(std::string_view asset_id) const;
  Page<ImageAsset> list_assets(std::size_t limit, const std::optional<std::string>& cursor) const;
  std::vector<Detection> detections_for_asset(std::string_view asset_id) const;
  std::optional<Detection> get_detection(std::string_view detection_id) const;
  DetectionPage query_detections(const DetectionFilter& filter) const;
  /// Unpaged, for reports: every detection whose asset arrived in [from, to).
  std::vector<Detection> detections_in_range(std::optional<Timestamp> from,
                                             std::optional<Timestamp> to) const;
  BlankStats blank_stats(std::optional<Timestamp> from, std::optional<Timestamp> to,
                         double threshold = 0.0) const;
  std::int64_t asset_count() const;
  std::int64_t detection_count() const;

  // Verdicts.
  /// Appends to the history; the newest verdict is the current one.
  /// Throws Errc::unknown_detection.
  Detection record_verdict(std::string_view detection_id, const HumanVerdict& verdict);
  std::vector<VerdictRecord> verdict_history(std::string_view detection_id) const;

  // Cameras.
  /// Insert or replace. Throws Errc::integrity_violation if the sender
  /// address already belongs to another camera.
  void put_camera(const CameraSource& camera);
  std::optional<CameraSource> get_camera(std::string_view camera_id) const;
  std::optional<CameraSource> find_camera_by_sender(std::string_view sender) const;
  Page<CameraSource> list_cameras(std::size_t limit, const std::optional<std::string>& cursor) const;
  /// False if absent. Throws Errc::integrity_violation while assets refer to it.
  bool delete_camera(std::string_view camera_id);

  // Alert rules.
  void put_rule(const AlertRule& rule);
  std::optional<AlertRule> get_rule(std::string_view rule_id) const;
  std::vector<AlertRule> all_rules() const;
  Page<AlertRule> list_rules(std::size_t limit, const std::optional<std::string>& cursor) const;
  /// Removes the rule and its alert history.
  bool delete_rule(std::string_view rule_id);

  // Alerts.
  /// Runs `evaluate` for an asset whose alerts have not been evaluated yet
  /// and stores the result in the same transaction. Returns only alerts that
  /// were newly inserted; (rule, detection) pairs are unique.
  std::vector<AlertEvent> fire_alerts(std::string_view asset_id, const AlertEvaluator& evaluate,
                                      std::int64_t max_cooldown_seconds);
  std::optional<AlertEvent> get_alert(std::string_view alert_id) const;
  AlertPage list_alerts(const AlertFilter& filter) const;
  std::vector<AlertEvent> alerts_with_status(DeliveryState status) const;
  void update_alert_status(std::string_view alert_id, DeliveryState status, int attempts,
                           std::string_view last_error);
  std::int64_t alert_count() const;

  // Quarantine.
  QuarantineEntry add_quarantine(std::string_view reason, std::string_view sender,
                                 std::string_view path, Timestamp received_at);
  Page<QuarantineEntry> list_quarantine(std::size_t limit,
                                        const std::optional<std::string>& cursor) const;
  std::int64_t quarantine_count() const;

  // Message-ID deduplication.
  /// True if `message_id` was recorded within `window` before `now`.
  bool message_seen(std::string_view message_id, Timestamp now,
                    std::chrono::milliseconds window) const;
  void record_message(std::string_view message_id, Timestamp now);

  // Backup.
  /// One JSON object per line with a "type" field; restorable by import.
  void export_records(std::ostream& out) const;
  /// Merges a dump; existing records are kept. Returns records inserted.
  std::size_t import_records(std::istream& in);

  /// Runs `integrity_check` and the schema's own consistency checks;
  /// returns problems found (empty when consistent).
  std::vector<std::string> check_consistency() const;

 private:
  EventStore(std::filesystem::path dir, sqlite3* db);

  template <typename F>
  auto transaction(F&& body) -> decltype(body());

  std::filesystem::path dir_;
  sqlite3* db_ = nullptr;
  mutable std::recursive_mutex mutex_;
};

}  // namespace trapwatch::store
