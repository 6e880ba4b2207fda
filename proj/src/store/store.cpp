#include "trapwatch/store/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "sqlite.hpp"
#include "trapwatch/core/error.hpp"
#include "trapwatch/core/hash.hpp"
#include "trapwatch/core/json.hpp"

namespace trapwatch::store {
namespace {

using sql::Stmt;
namespace fs = std::filesystem;

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS cameras (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  camera_id TEXT NOT NULL UNIQUE,
  name TEXT NOT NULL,
  lat REAL,
  lon REAL,
  smtp_sender TEXT NOT NULL,
  ir_sensitivity TEXT NOT NULL,
  active INTEGER NOT NULL
);
CREATE UNIQUE INDEX IF NOT EXISTS cameras_sender
  ON cameras(smtp_sender COLLATE NOCASE) WHERE smtp_sender <> '';

CREATE TABLE IF NOT EXISTS assets (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  asset_id TEXT NOT NULL UNIQUE,
  content_hash TEXT NOT NULL UNIQUE,
  width INTEGER NOT NULL,
  height INTEGER NOT NULL,
  dpi INTEGER,
  camera_id TEXT REFERENCES cameras(camera_id),
  received_at INTEGER NOT NULL,
  trigger_time INTEGER NOT NULL,
  storage_key TEXT NOT NULL,
  alerts_done INTEGER NOT NULL DEFAULT 0
);
CREATE INDEX IF NOT EXISTS assets_received ON assets(received_at);

CREATE TABLE IF NOT EXISTS detections (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  detection_id TEXT NOT NULL UNIQUE,
  asset_id TEXT NOT NULL REFERENCES assets(asset_id),
  idx INTEGER NOT NULL,
  x_min REAL NOT NULL,
  y_min REAL NOT NULL,
  x_max REAL NOT NULL,
  y_max REAL NOT NULL,
  class_id INTEGER NOT NULL,
  confidence REAL NOT NULL,
  model_version TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS detections_asset ON detections(asset_id);

CREATE TABLE IF NOT EXISTS verdicts (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  detection_id TEXT NOT NULL REFERENCES detections(detection_id),
  true_class_id INTEGER,
  sentinel TEXT,
  reviewer TEXT NOT NULL,
  reviewed_at INTEGER NOT NULL,
  CHECK ((true_class_id IS NULL) <> (sentinel IS NULL))
);
CREATE INDEX IF NOT EXISTS verdicts_detection ON verdicts(detection_id);

CREATE TABLE IF NOT EXISTS alert_rules (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  rule_id TEXT NOT NULL UNIQUE,
  body TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS alerts (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  alert_id TEXT NOT NULL UNIQUE,
  rule_id TEXT NOT NULL REFERENCES alert_rules(rule_id) ON DELETE CASCADE,
  detection_id TEXT NOT NULL REFERENCES detections(detection_id),
  camera_id TEXT,
  class_id INTEGER NOT NULL,
  event_time INTEGER NOT NULL,
  fired_at INTEGER NOT NULL,
  status TEXT NOT NULL,
  attempts INTEGER NOT NULL,
  last_error TEXT NOT NULL,
  UNIQUE (rule_id, detection_id)
);
CREATE INDEX IF NOT EXISTS alerts_cooldown ON alerts(rule_id, camera_id, class_id, event_time);

CREATE TABLE IF NOT EXISTS quarantine (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  entry_id TEXT NOT NULL UNIQUE,
  reason TEXT NOT NULL,
  sender TEXT NOT NULL,
  path TEXT NOT NULL,
  received_at INTEGER NOT NULL
);

CREATE TABLE IF NOT EXISTS messages (
  message_id TEXT PRIMARY KEY,
  seen_at INTEGER NOT NULL
);
)sql";

constexpr const char* kDetectionColumns =
    "SELECT d.detection_id, d.asset_id, d.x_min, d.y_min, d.x_max, d.y_max, d.class_id, "
    "d.confidence, d.model_version, v.true_class_id, v.sentinel, v.reviewer, v.reviewed_at, "
    "a.received_at "
    "FROM detections d JOIN assets a ON a.asset_id = d.asset_id "
    "LEFT JOIN verdicts v ON v.seq = "
    "(SELECT MAX(seq) FROM verdicts WHERE detection_id = d.detection_id) ";

constexpr const char* kAssetColumns =
    "SELECT asset_id, content_hash, width, height, dpi, camera_id, received_at, trigger_time, "
    "storage_key, seq FROM assets ";

constexpr const char* kCameraColumns =
    "SELECT camera_id, name, lat, lon, smtp_sender, ir_sensitivity, active, seq FROM cameras ";

constexpr const char* kAlertColumns =
    "SELECT alert_id, rule_id, detection_id, camera_id, class_id, event_time, fired_at, status, "
    "attempts, last_error, seq FROM alerts ";

std::size_t clamp_limit(std::size_t limit) { return std::clamp<std::size_t>(limit, 1, kMaxPageSize); }

Detection read_detection(const Stmt& s) {
  Detection d;
  d.detection_id = s.text(0);
  d.asset_id = s.text(1);
  d.box = BoundingBox{s.real(2), s.real(3), s.real(4), s.real(5), Frame::original};
  d.class_id = static_cast<int>(s.int64(6));
  d.confidence = s.real(7);
  d.model_version = s.text(8);
  if (!s.is_null(11)) {
    HumanVerdict v;
    if (auto cls = s.opt_int64(9)) {
      v.truth = static_cast<int>(*cls);
    } else {
      auto sentinel = parse_sentinel(s.text(10));
      if (!sentinel) throw Error(Errc::io_error, "stored verdict has an unknown sentinel");
      v.truth = *sentinel;
    }
    v.reviewer = s.text(11);
    v.reviewed_at = from_millis(s.int64(12));
    d.verdict = std::move(v);
  }
  return d;
}

ImageAsset read_asset(const Stmt& s) {
  ImageAsset a;
  a.asset_id = s.text(0);
  a.content_hash = s.text(1);
  a.width = static_cast<int>(s.int64(2));
  a.height = static_cast<int>(s.int64(3));
  if (auto dpi = s.opt_int64(4)) a.dpi = static_cast<int>(*dpi);
  a.camera_id = s.opt_text(5);
  a.received_at = from_millis(s.int64(6));
  a.trigger_time = from_millis(s.int64(7));
  a.storage_key = s.text(8);
  return a;
}

CameraSource read_camera(const Stmt& s) {
  CameraSource c;
  c.camera_id = s.text(0);
  c.name = s.text(1);
  if (!s.is_null(2) && !s.is_null(3)) c.location = GeoPoint{s.real(2), s.real(3)};
  c.smtp_sender = s.text(4);
  c.ir_sensitivity = parse_ir_sensitivity(s.text(5));
  c.active = s.int64(6) != 0;
  return c;
}

AlertEvent read_alert(const Stmt& s) {
  AlertEvent a;
  a.alert_id = s.text(0);
  a.rule_id = s.text(1);
  a.detection_id = s.text(2);
  a.camera_id = s.opt_text(3);
  a.class_id = static_cast<int>(s.int64(4));
  a.event_time = from_millis(s.int64(5));
  a.fired_at = from_millis(s.int64(6));
  a.status = parse_delivery_state(s.text(7));
  a.attempts = static_cast<int>(s.int64(8));
  a.last_error = s.text(9);
  return a;
}

// Sequence cursors are hex-wrapped decimal sequence numbers.
std::string seq_cursor(std::int64_t seq) { return hex_encode(std::to_string(seq)); }

std::int64_t parse_seq_cursor(const std::string& cursor) {
  std::string raw;
  std::int64_t seq = 0;
  if (!hex_decode(cursor, raw) || raw.empty()) throw Error(Errc::bad_cursor, "malformed cursor");
  auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), seq);
  if (ec != std::errc{} || ptr != raw.data() + raw.size() || seq < 0) {
    throw Error(Errc::bad_cursor, "malformed cursor");
  }
  return seq;
}

// Detection cursors carry the (received_at, detection_id) of the last row.
std::string detection_cursor(std::int64_t received_ms, std::string_view detection_id) {
  return hex_encode(fmt::format("{}:{}", received_ms, detection_id));
}

std::pair<std::int64_t, std::string> parse_detection_cursor(const std::string& cursor) {
  std::string raw;
  if (!hex_decode(cursor, raw)) throw Error(Errc::bad_cursor, "malformed cursor");
  auto colon = raw.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == raw.size()) {
    throw Error(Errc::bad_cursor, "malformed cursor");
  }
  std::int64_t ms = 0;
  auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + colon, ms);
  if (ec != std::errc{} || ptr != raw.data() + colon) throw Error(Errc::bad_cursor, "malformed cursor");
  return {ms, raw.substr(colon + 1)};
}

void write_durably(const fs::path& path, std::string_view bytes) {
  const fs::path tmp = path.string() + ".tmp." + random_id();
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(Errc::io_error, fmt::format("cannot create {}", tmp.string()));
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      ::unlink(tmp.c_str());
      throw Error(Errc::io_error, fmt::format("write failed on {}", tmp.string()));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    ::unlink(tmp.c_str());
    throw Error(Errc::io_error, fmt::format("fsync failed on {}", tmp.string()));
  }
  ::close(fd);
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    ::unlink(tmp.c_str());
    throw Error(Errc::io_error, fmt::format("cannot move blob into {}", path.string()));
  }
  const int dfd = ::open(path.parent_path().c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

struct DetectionRow {
  std::int64_t received_ms;
  Detection detection;
};

}  // namespace

template <typename F>
auto EventStore::transaction(F&& body) -> decltype(body()) {
  std::lock_guard lock(mutex_);
  sql::exec(db_, "BEGIN IMMEDIATE");
  try {
    if constexpr (std::is_void_v<decltype(body())>) {
      body();
      sql::exec(db_, "COMMIT");
    } else {
      auto result = body();
      sql::exec(db_, "COMMIT");
      return result;
    }
  } catch (...) {
    sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
    throw;
  }
}

std::unique_ptr<EventStore> EventStore::open(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "blobs", ec);
  if (ec) throw Error(Errc::io_error, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  sqlite3* db = nullptr;
  const auto file = dir / "trapwatch.db";
  const int rc = sqlite3_open_v2(file.c_str(), &db,
                                 SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                                 nullptr);
  if (rc != SQLITE_OK) {
    std::string msg = db ? sqlite3_errmsg(db) : sqlite3_errstr(rc);
    sqlite3_close(db);
    throw Error(Errc::io_error, fmt::format("cannot open {}: {}", file.string(), msg));
  }
  std::unique_ptr<EventStore> store(new EventStore(dir, db));
  sqlite3_busy_timeout(db, 10000);
  sql::exec(db, "PRAGMA journal_mode=WAL");
  sql::exec(db, "PRAGMA synchronous=FULL");
  sql::exec(db, "PRAGMA foreign_keys=ON");
  sql::exec(db, kSchema);
  return store;
}

EventStore::EventStore(fs::path dir, sqlite3* db) : dir_(std::move(dir)), db_(db) {}

EventStore::~EventStore() { sqlite3_close_v2(db_); }

std::string EventStore::blob_key(std::string_view content_hash, std::string_view ext) {
  if (content_hash.size() < 2) throw Error(Errc::invalid_argument, "content hash too short");
  return fmt::format("blobs/{}/{}.{}", content_hash.substr(0, 2), content_hash, ext);
}

fs::path EventStore::blob_path(std::string_view key) const {
  if (key.rfind("blobs/", 0) != 0 || key.find("..") != std::string_view::npos) {
    throw Error(Errc::invalid_argument, fmt::format("'{}' is not a blob key", key));
  }
  return dir_ / fs::path(std::string(key));
}

void EventStore::put_blob(std::string_view key, std::string_view bytes) {
  const auto path = blob_path(key);
  std::error_code ec;
  if (fs::exists(path, ec)) return;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(Errc::io_error, fmt::format("cannot create {}", path.parent_path().string()));
  write_durably(path, bytes);
}

std::optional<std::string> EventStore::read_blob(std::string_view key) const {
  std::ifstream in(blob_path(key), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PutResult EventStore::put_asset(const ImageAsset& asset, const std::vector<Detection>& detections) {
  if (asset.asset_id.empty() || asset.content_hash.empty()) {
    throw Error(Errc::invalid_argument, "asset needs an id and a content hash");
  }
  if (asset.width < 1 || asset.height < 1) throw Error(Errc::invalid_argument, "asset size must be positive");
  for (const auto& d : detections) {
    if (d.asset_id != asset.asset_id) {
      throw Error(Errc::integrity_violation,
                  fmt::format("detection {} references asset {} not {}", d.detection_id, d.asset_id,
                              asset.asset_id));
    }
    validate(d.box);
  }
  return transaction([&] {
    PutResult result;
    result.asset_id = asset.asset_id;
    {
      Stmt q(db_, "SELECT asset_id, seq FROM assets WHERE content_hash = ?");
      q.bind_all(asset.content_hash);
      if (q.step()) {
        result.asset_id = q.text(0);
        result.sequence = q.int64(1);
        result.duplicate = true;
        Stmt ids(db_, "SELECT detection_id FROM detections WHERE asset_id = ? ORDER BY idx");
        ids.bind_all(result.asset_id);
        while (ids.step()) result.detection_ids.push_back(ids.text(0));
        return result;
      }
    }
    Stmt ins(db_,
             "INSERT INTO assets (asset_id, content_hash, width, height, dpi, camera_id, "
             "received_at, trigger_time, storage_key) VALUES (?,?,?,?,?,?,?,?,?)");
    ins.bind_all(asset.asset_id, asset.content_hash, asset.width, asset.height, asset.dpi,
                 asset.camera_id, to_millis(asset.received_at), to_millis(asset.trigger_time),
                 asset.storage_key);
    ins.run();
    result.sequence = sqlite3_last_insert_rowid(db_);
    Stmt det(db_,
             "INSERT INTO detections (detection_id, asset_id, idx, x_min, y_min, x_max, y_max, "
             "class_id, confidence, model_version) VALUES (?,?,?,?,?,?,?,?,?,?)");
    std::int64_t idx = 0;
    for (const auto& d : detections) {
      det.reset();
      det.bind_all(d.detection_id, d.asset_id, idx++, d.box.x_min, d.box.y_min, d.box.x_max,
                   d.box.y_max, d.class_id, d.confidence, d.model_version);
      det.run();
      result.detection_ids.push_back(d.detection_id);
    }
    return result;
  });
}

std::vector<std::string> EventStore::put_detections(std::string_view asset_id,
                                                    const std::vector<Detection>& detections) {
  for (const auto& d : detections) {
    if (d.asset_id != asset_id) {
      throw Error(Errc::integrity_violation,
                  fmt::format("detection {} references asset {} not {}", d.detection_id, d.asset_id,
                              asset_id));
    }
    validate(d.box);
  }
  return transaction([&] {
    Stmt q(db_, "SELECT COALESCE(MAX(d.idx) + 1, 0), COUNT(a.asset_id) FROM assets a "
                "LEFT JOIN detections d ON d.asset_id = a.asset_id WHERE a.asset_id = ?");
    q.bind_all(asset_id);
    q.step();
    if (q.int64(1) == 0) {
      throw Error(Errc::integrity_violation, fmt::format("asset {} does not exist", asset_id));
    }
    std::int64_t idx = q.int64(0);
    std::vector<std::string> ids;
    Stmt det(db_,
             "INSERT INTO detections (detection_id, asset_id, idx, x_min, y_min, x_max, y_max, "
             "class_id, confidence, model_version) VALUES (?,?,?,?,?,?,?,?,?,?)");
    for (const auto& d : detections) {
      det.reset();
      det.bind_all(d.detection_id, d.asset_id, idx++, d.box.x_min, d.box.y_min, d.box.x_max,
                   d.box.y_max, d.class_id, d.confidence, d.model_version);
      det.run();
      ids.push_back(d.detection_id);
    }
    return ids;
  });
}

std::optional<ImageAsset> EventStore::find_asset_by_hash(std::string_view content_hash) const {
  std::lock_guard lock(mutex_);
  Stmt q(db_, std::string(kAssetColumns) + "WHERE content_hash = ?");
  q.bind_all(content_hash);
  if (!q.step()) return std::nullopt;
  return read_asset(q);
}

std::optional<ImageAsset> EventStore::get_asset(std::string_view asset_id) const {
  std::lock_guard lock(mutex_);
  Stmt q(db_, std::string(kAssetColumns) + "WHERE asset_id = ?");
  q.bind_all(asset_id);
  if (!q.step()) return std::nullopt;
  return read_asset(q);
}

Page<ImageAsset> EventStore::list_assets(std::size_t limit,
                                         const std::optional<std::string>& cursor) const {
  const auto after = cursor ? parse_seq_cursor(*cursor) : 0;
  limit = clamp_limit(limit);
  std::lock_guard lock(mutex_);
  Stmt q(db_, std::string(kAssetColumns) + "WHERE seq > ? ORDER BY seq LIMIT ?");
  q.bind_all(after, static_cast<std::int64_t>(limit + 1));
  Page<ImageAsset> page;
  std::int64_t last = 0;
  while (q.step()) {
    if (page.items.size() == limit) {
      page.next_cursor = seq_cursor(last);
      break;
    }
    page.items.push_back(read_asset(q));
    last = q.int64(9);
  }
  return page;
}

std::vector<Detection> EventStore::detections_for_asset(std::string_view asset_id) const {
  std::lock_guard lock(mutex_);
  Stmt q(db_, std::string(kDetectionColumns) + "WHERE d.asset_id = ? ORDER BY d.idx");
  q.bind_all(asset_id);
  std::vector<Detection> out;
  while (q.step()) out.push_back(read_detection(q));
  return out;
}

std::optional<Detection> EventStore::get_detection(std::string_view detection_id) const {
  std::lock_guard lock(mutex_);
  Stmt q(db_, std::string(kDetectionColumns) + "WHERE d.detection_id = ?");
  q.bind_all(detection_id);
  if (!q.step()) return std::nullopt;
  return read_detection(q);
}

DetectionPage EventStore::query_detections(const DetectionFilter& f) const {
  std::optional<std::pair<std::int64_t, std::string>> after;
  if (f.cursor) after = parse_detection_cursor(*f.cursor);
  if (f.min_confidence && !(*f.min_confidence >= 0.0 && *f.min_confidence <= 1.0)) {
    throw Error(Errc::invalid_argument, "min_confidence must lie in [0,1]");
  }
  const auto limit = clamp_limit(f.limit);

  std::string where = "WHERE 1=1 ";
  if (f.camera_id) where += "AND a.camera_id = ?1 ";
  if (f.class_id) where += "AND d.class_id = ?2 ";
  if (f.from) where += "AND a.received_at >= ?3 ";
  if (f.to) where += "AND a.received_at < ?4 ";
  if (f.min_confidence) where += "AND d.confidence >= ?5 ";
  if (f.verified) where += *f.verified ? "AND v.seq IS NOT NULL " : "AND v.seq IS NULL ";
  if (after) where += "AND (a.received_at < ?6 OR (a.received_at = ?6 AND d.detection_id > ?7)) ";

  std::lock_guard lock(mutex_);
  Stmt q(db_, std::string(kDetectionColumns) + where +
                  "ORDER BY a.received_at DESC, d.detection_id ASC LIMIT ?8");
  if (f.camera_id) q.bind(1, *f.camera_id);
  if (f.class_id) q.bind(2, *f.class_id);
  if (f.from) q.bind(3, to_millis(*f.from));
  if (f.to) q.bind(4, to_millis(*f.to));
  if (f.min_confidence) q.bind(5, *f.min_confidence);
  if (after) {
    q.bind(6, after->first);
    q.bind(7, after->second);
  }
  q.bind(8, static_cast<std::int64_t>(limit + 1));
  DetectionPage page;
  std::int64_t last_ms = 0;
  while (q.step()) {
    if (page.items.size() == limit) {
      page.next_cursor = detection_cursor(last_ms, page.items.back().detection_id);
      break;
    }
    page.items.push_back(read_detection(q));
    last_ms = q.int64(13);
  }
  return page;
}

std::vector<Detection> EventStore::detections_in_range(std::optional<Timestamp> from,
                                                       std::optional<Timestamp> to) const {
  std::lock_guard lock(mutex_);
  Stmt q(db_, std::string(kDetectionColumns) +
                  "WHERE (?1 IS NULL OR a.received_at >= ?1) AND (?2 IS NULL OR a.received_at < ?2) "
                  "ORDER BY a.received_at, d.asset_id, d.idx");
  if (from) q.bind(1, to_millis(*from));
  if (to) q.bind(2, to_millis(*to));
  std::vector<Detection> out;
  while (q.step()) out.push_back(read_detection(q));
  return out;
}

BlankStats EventStore::blank_stats(std::optional<Timestamp> from, std::optional<Timestamp> to,
                                   double threshold) const {
  std::lock_guard lock(mutex_);
  Stmt q(db_,
         "SELECT COUNT(*), COALESCE(SUM(CASE WHEN NOT EXISTS (SELECT 1 FROM detections d "
         "WHERE d.asset_id = a.asset_id AND d.confidence >= ?3) THEN 1 ELSE 0 END), 0) "
         "FROM assets a WHERE (?1 IS NULL OR a.received_at >= ?1) "
         "AND (?2 IS NULL OR a.received_at < ?2)");
  if (from) q.bind(1, to_millis(*from));
  if (to) q.bind(2, to_millis(*to));
  q.bind(3, threshold);
  q.step();
  BlankStats s;
  s.total_assets = q.int64(0);
  s.blank_assets = q.int64(1);
  if (s.total_assets > 0) {
    s.blank_fraction = static_cast<double>(s.blank_assets) / static_cast<double>(s.total_assets);
  }
  return s;
}

std::int64_t EventStore::asset_count() const {
  std::lock_guard lock(mutex_);
  Stmt q(db_, "SELECT COUNT(*) FROM assets");
  q.step();
  return q.int64(0);
}

std::int64_t EventStore::detection_count() const {
  std::lock_guard lock(mutex_);
  Stmt q(db_, "SELECT COUNT(*) FROM detections");
  q.step();
  return q.int64(0);
}

Detection EventStore::record_verdict(std::string_view detection_id, const HumanVerdict& verdict) {
  return transaction([&] {
    {
      Stmt q(db_, "SELECT 1 FROM detections WHERE detection_id = ?");
      q.bind_all(detection_id);
      if (!q.step()) {
        throw Error(Errc::unknown_detection, fmt::format("no detection {}", detection_id));
      }
    }
    Stmt ins(db_,
             "INSERT INTO verdicts (detection_id, true_class_id, sentinel, reviewer, reviewed_at) "
             "VALUES (?,?,?,?,?)");
    std::optional<std::int64_t> cls;
    std::optional<std::string> sentinel;
    if (verdict.is_class()) {
      cls = verdict.true_class_id();
    } else {
      sentinel = std::string(to_string(std::get<VerdictSentinel>(verdict.truth)));
    }
    ins.bind_all(detection_id, cls, sentinel, verdict.reviewer, to_millis(verdict.reviewed_at));
    ins.run();
    Stmt q(db_, std::string(kDetectionColumns) + "WHERE d.detection_id = ?");
    q.bind_all(detection_id);
    q.step();
    return read_detection(q);
  });
}

std::vector<VerdictRecord> EventStore::verdict_history(std::string_view detection_id) const {
  std::lock_guard lock(mutex_);
  Stmt q(db_,
         "SELECT seq, true_class_id, sentinel, reviewer, reviewed_at FROM verdicts "
         "WHERE detection_id = ? ORDER BY seq");
  q.bind_all(detection_id);
  std::vector<VerdictRecord> out;
  while (q.step()) {
    VerdictRecord r;
    r.sequence = q.int64(0);
    r.detection_id = std::string(detection_id);
    if (auto cls = q.opt_int64(1)) {
      r.verdict.truth = static_cast<int>(*cls);
    } else {
      r.verdict.truth = parse_sentinel(q.text(2)).value_or(VerdictSentinel::no_good);
    }
    r.verdict.reviewer = q.text(3);
    r.verdict.reviewed_at = from_millis(q.int64(4));
    out.push_back(std::move(r));
  }
  return out;
}

void EventStore::put_camera(const CameraSource& c) {
  if (c.camera_id.empty()) throw Error(Errc::invalid_argument, "camera_id must not be empty");
  if (c.camera_id == kBatchUploadSource) {
    throw Error(Errc::invalid_argument, fmt::format("'{}' is reserved", kBatchUploadSource));
  }
  transaction([&] {
    Stmt q(db_,
           "INSERT INTO cameras (camera_id, name, lat, lon, smtp_sender, ir_sensitivity, active) "
           "VALUES (?,?,?,?,?,?,?) ON CONFLICT(camera_id) DO UPDATE SET name = excluded.name, "
           "lat = excluded.lat, lon = excluded.lon, smtp_sender = excluded.smtp_sender, "
           "ir_sensitivity = excluded.ir_sensitivity, active = excluded.active");
    std::optional<double> lat, lon;
    if (c.location) {
      lat = c.location->lat;
      lon = c.location->lon;
    }
    q.bind_all(c.camera_id, c.name, lat, lon, c.smtp_sender,
               std::string(to_string(c.ir_sensitivity)), c.active ? 1 : 0);
    q.run();
  });
}

std::optional<CameraSource> EventStore::get_camera(std::string_view camera_id) const {
  std::lock_guard lock(mutex_);
  Stmt q(db_, std::string(kCameraColumns) + "WHERE camera_id = ?");
  q.bind_all(camera_id);
  if (!q.step()) return std::nullopt;
  return read_camera(q);
}

std::optional<CameraSource> EventStore::find_camera_by_sender(std::string_view sender) const {
  if (sender.empty()) return std::nullopt;
  std::lock_guard lock(mutex_);
  Stmt q(db_, std::string(kCameraColumns) + "WHERE smtp_sender = ? COLLATE NOCASE");
  q.bind_all(sender);
  if (!q.step()) return std::nullopt;
  return read_camera(q);
}

Page<CameraSource> EventStore::list_cameras(std::size_t limit,
                                            const std::optional<std::string>& cursor) const {
  const auto after = cursor ? parse_seq_cursor(*cursor) : 0;
  limit = clamp_limit(limit);
  std::lock_guard lock(mutex_);
  Stmt q(db_, std::string(kCameraColumns) + "WHERE seq > ? ORDER BY seq LIMIT ?");
  q.bind_all(after, static_cast<std::int64_t>(limit + 1));
  Page<CameraSource> page;
  std::int64_t last = 0;
  while (q.step()) {
    if (page.items.size() == limit) {
      page.next_cursor = seq_cursor(last);
      break;
    }
    page.items.push_back(read_camera(q));
    last = q.int64(7);
  }
  return page;
}

bool EventStore::delete_camera(std::string_view camera_id) {
  return transaction([&] {
    Stmt q(db_, "DELETE FROM cameras WHERE camera_id = ?");
    q.bind_all(camera_id);
    return q.run() > 0;
  });
}

void EventStore::put_rule(const AlertRule& rule) {
  validate(rule);
  transaction([&] {
    Stmt q(db_,
           "INSERT INTO alert_rules (rule_id, body) VALUES (?,?) "
           "ON CONFLICT(rule_id) DO UPDATE SET body = excluded.body");
    q.bind_all(rule.rule_id, nlohmann::json(rule).dump());
    q.run();
  });
}

std::optional<AlertRule> EventStore::get_rule(std::string_view rule_id) const {
  std::lock_guard lock(mutex_);
  Stmt q(db_, "SELECT body FROM alert_rules WHERE rule_id = ?");
  q.bind_all(rule_id);
  if (!q.step()) return std::nullopt;
  return nlohmann::json::parse(q.text(0)).get<AlertRule>();
}

std::vector<AlertRule> EventStore::all_rules() const {
  std::lock_guard lock(mutex_);
  Stmt q(db_, "SELECT body FROM alert_rules ORDER BY seq");
  std::vector<AlertRule> out;
  while (q.step()) out.push_back(nlohmann::json::parse(q.text(0)).get<AlertRule>());
  return out;
}

Page<AlertRule> EventStore::list_rules(std::size_t limit,
                                       const std::optional<std::string>& cursor) const {
  const auto after = cursor ? parse_seq_cursor(*cursor) : 0;
  limit = clamp_limit(limit);
  std::lock_guard lock(mutex_);
  Stmt q(db_, "SELECT body, seq FROM alert_rules WHERE seq > ? ORDER BY seq LIMIT ?");
  q.bind_all(after, static_cast<std::int64_t>(limit + 1));
  Page<AlertRule> page;
  std::int64_t last = 0;
  while (q.step()) {
    if (page.items.size() == limit) {
      page.next_cursor = seq_cursor(last);
      break;
    }
    page.items.push_back(nlohmann::json::parse(q.text(0)).get<AlertRule>());
    last = q.int64(1);
  }
  return page;
}

bool EventStore::delete_rule(std::string_view rule_id) {
  return transaction([&] {
    Stmt q(db_, "DELETE FROM alert_rules WHERE rule_id = ?");
    q.bind_all(rule_id);
    return q.run() > 0;
  });
}

std::vector<AlertEvent> EventStore::fire_alerts(std::string_view asset_id,
                                                const AlertEvaluator& evaluate,
                                                std::int64_t max_cooldown_seconds) {
  return transaction([&]() -> std::vector<AlertEvent> {
    AlertContext ctx;
    {
      Stmt q(db_, std::string(kAssetColumns) + "WHERE asset_id = ?");
      q.bind_all(asset_id);
      if (!q.step()) throw Error(Errc::not_found, fmt::format("no asset {}", asset_id));
      ctx.asset = read_asset(q);
      Stmt done(db_, "SELECT alerts_done FROM assets WHERE asset_id = ?");
      done.bind_all(asset_id);
      done.step();
      if (done.int64(0) != 0) return {};
    }
    {
      Stmt q(db_, std::string(kDetectionColumns) + "WHERE d.asset_id = ? ORDER BY d.idx");
      q.bind_all(asset_id);
      while (q.step()) ctx.detections.push_back(read_detection(q));
    }
    {
      Stmt q(db_, "SELECT body FROM alert_rules ORDER BY seq");
      while (q.step()) ctx.rules.push_back(nlohmann::json::parse(q.text(0)).get<AlertRule>());
    }
    {
      const auto window = std::max<std::int64_t>(0, max_cooldown_seconds) * 1000;
      const auto t = to_millis(ctx.asset.trigger_time);
      Stmt q(db_, std::string(kAlertColumns) +
                      "WHERE camera_id IS ? AND event_time > ? AND event_time < ? ORDER BY seq");
      q.bind_all(ctx.asset.camera_id, t - window - 1, t + window + 1);
      while (q.step()) ctx.recent.push_back(read_alert(q));
    }
    std::vector<AlertEvent> fired;
    if (!ctx.detections.empty()) {
      Stmt ins(db_,
               "INSERT OR IGNORE INTO alerts (alert_id, rule_id, detection_id, camera_id, "
               "class_id, event_time, fired_at, status, attempts, last_error) "
               "VALUES (?,?,?,?,?,?,?,?,?,?)");
      for (auto& a : evaluate(ctx)) {
        ins.reset();
        ins.bind_all(a.alert_id, a.rule_id, a.detection_id, a.camera_id, a.class_id,
                     to_millis(a.event_time), to_millis(a.fired_at),
                     std::string(to_string(a.status)), a.attempts, a.last_error);
        if (ins.run() > 0) fired.push_back(std::move(a));
      }
    }
    Stmt mark(db_, "UPDATE assets SET alerts_done = 1 WHERE asset_id = ?");
    mark.bind_all(asset_id);
    mark.run();
    return fired;
  });
}

std::optional<AlertEvent> EventStore::get_alert(std::string_view alert_id) const {
  std::lock_guard lock(mutex_);
  Stmt q(db_, std::string(kAlertColumns) + "WHERE alert_id = ?");
  q.bind_all(alert_id);
  if (!q.step()) return std::nullopt;
  return read_alert(q);
}

AlertPage EventStore::list_alerts(const AlertFilter& f) const {
  const auto before = f.cursor ? std::optional(parse_seq_cursor(*f.cursor)) : std::nullopt;
  const auto limit = clamp_limit(f.limit);
  std::lock_guard lock(mutex_);
  Stmt q(db_, std::string(kAlertColumns) +
                  "WHERE (?1 IS NULL OR rule_id = ?1) AND (?2 IS NULL OR status = ?2) "
                  "AND (?3 IS NULL OR seq < ?3) ORDER BY seq DESC LIMIT ?4");
  if (f.rule_id) q.bind(1, *f.rule_id);
  if (f.status) q.bind(2, to_string(*f.status));
  if (before) q.bind(3, *before);
  q.bind(4, static_cast<std::int64_t>(limit + 1));
  AlertPage page;
  std::int64_t last = 0;
  while (q.step()) {
    if (page.items.size() == limit) {
      page.next_cursor = seq_cursor(last);
      break;
    }
    page.items.push_back(read_alert(q));
    last = q.int64(10);
  }
  return page;
}

std::vector<AlertEvent> EventStore::alerts_with_status(DeliveryState status) const {
  std::lock_guard lock(mutex_);
  Stmt q(db_, std::string(kAlertColumns) + "WHERE status = ? ORDER BY seq");
  q.bind_all(to_string(status));
  std::vector<AlertEvent> out;
  while (q.step()) out.push_back(read_alert(q));
  return out;
}

void EventStore::update_alert_status(std::string_view alert_id, DeliveryState status, int attempts,
                                     std::string_view last_error) {
  transaction([&] {
    Stmt q(db_, "UPDATE alerts SET status = ?, attempts = ?, last_error = ? WHERE alert_id = ?");
    q.bind_all(to_string(status), attempts, last_error, alert_id);
    if (q.run() == 0) throw Error(Errc::not_found, fmt::format("no alert {}", alert_id));
  });
}

std::int64_t EventStore::alert_count() const {
  std::lock_guard lock(mutex_);
  Stmt q(db_, "SELECT COUNT(*) FROM alerts");
  q.step();
  return q.int64(0);
}

QuarantineEntry EventStore::add_quarantine(std::string_view reason, std::string_view sender,
                                           std::string_view path, Timestamp received_at) {
  return transaction([&] {
    QuarantineEntry e;
    e.entry_id = random_id();
    e.reason = std::string(reason);
    e.sender = std::string(sender);
    e.path = std::string(path);
    e.received_at = received_at;
    Stmt q(db_,
           "INSERT INTO quarantine (entry_id, reason, sender, path, received_at) VALUES (?,?,?,?,?)");
    q.bind_all(e.entry_id, e.reason, e.sender, e.path, to_millis(received_at));
    q.run();
    e.sequence = sqlite3_last_insert_rowid(db_);
    return e;
  });
}

Page<QuarantineEntry> EventStore::list_quarantine(std::size_t limit,
                                                  const std::optional<std::string>& cursor) const {
  const auto after = cursor ? parse_seq_cursor(*cursor) : 0;
  limit = clamp_limit(limit);
  std::lock_guard lock(mutex_);
  Stmt q(db_,
         "SELECT seq, entry_id, reason, sender, path, received_at FROM quarantine "
         "WHERE seq > ? ORDER BY seq LIMIT ?");
  q.bind_all(after, static_cast<std::int64_t>(limit + 1));
  Page<QuarantineEntry> page;
  while (q.step()) {
    if (page.items.size() == limit) {
      page.next_cursor = seq_cursor(page.items.back().sequence);
      break;
    }
    QuarantineEntry e;
    e.sequence = q.int64(0);
    e.entry_id = q.text(1);
    e.reason = q.text(2);
    e.sender = q.text(3);
    e.path = q.text(4);
    e.received_at = from_millis(q.int64(5));
    page.items.push_back(std::move(e));
  }
  return page;
}

std::int64_t EventStore::quarantine_count() const {
  std::lock_guard lock(mutex_);
  Stmt q(db_, "SELECT COUNT(*) FROM quarantine");
  q.step();
  return q.int64(0);
}

bool EventStore::message_seen(std::string_view message_id, Timestamp now,
                              std::chrono::milliseconds window) const {
  if (message_id.empty()) return false;
  std::lock_guard lock(mutex_);
  Stmt q(db_, "SELECT seen_at FROM messages WHERE message_id = ?");
  q.bind_all(message_id);
  if (!q.step()) return false;
  const auto seen = q.int64(0);
  const auto t = to_millis(now);
  return t - seen < window.count() && seen - t < window.count();
}

void EventStore::record_message(std::string_view message_id, Timestamp now) {
  if (message_id.empty()) return;
  transaction([&] {
    Stmt q(db_,
           "INSERT INTO messages (message_id, seen_at) VALUES (?,?) "
           "ON CONFLICT(message_id) DO UPDATE SET seen_at = excluded.seen_at");
    q.bind_all(message_id, to_millis(now));
    q.run();
  });
}

void EventStore::export_records(std::ostream& out) const {
  std::lock_guard lock(mutex_);
  auto emit = [&](const char* type, nlohmann::json j) {
    j["type"] = type;
    out << j.dump() << '\n';
  };
  {
    Stmt q(db_, std::string(kCameraColumns) + "ORDER BY seq");
    while (q.step()) emit("camera", read_camera(q));
  }
  {
    Stmt q(db_, "SELECT body FROM alert_rules ORDER BY seq");
    while (q.step()) emit("alert_rule", nlohmann::json::parse(q.text(0)));
  }
  {
    Stmt q(db_, std::string(kAssetColumns) + "ORDER BY seq");
    while (q.step()) emit("asset", read_asset(q));
  }
  {
    Stmt q(db_,
           "SELECT detection_id, asset_id, x_min, y_min, x_max, y_max, class_id, confidence, "
           "model_version FROM detections ORDER BY seq");
    while (q.step()) {
      Detection d;
      d.detection_id = q.text(0);
      d.asset_id = q.text(1);
      d.box = BoundingBox{q.real(2), q.real(3), q.real(4), q.real(5), Frame::original};
      d.class_id = static_cast<int>(q.int64(6));
      d.confidence = q.real(7);
      d.model_version = q.text(8);
      nlohmann::json j = d;
      j.erase("verdict");
      emit("detection", std::move(j));
    }
  }
  {
    Stmt q(db_,
           "SELECT detection_id, true_class_id, sentinel, reviewer, reviewed_at FROM verdicts "
           "ORDER BY seq");
    while (q.step()) {
      HumanVerdict v;
      if (auto cls = q.opt_int64(1)) {
        v.truth = static_cast<int>(*cls);
      } else {
        v.truth = parse_sentinel(q.text(2)).value_or(VerdictSentinel::no_good);
      }
      v.reviewer = q.text(3);
      v.reviewed_at = from_millis(q.int64(4));
      nlohmann::json j = v;
      j["detection_id"] = q.text(0);
      emit("verdict", std::move(j));
    }
  }
  {
    Stmt q(db_, std::string(kAlertColumns) + "ORDER BY seq");
    while (q.step()) emit("alert", read_alert(q));
  }
  {
    Stmt q(db_, "SELECT entry_id, reason, sender, path, received_at FROM quarantine ORDER BY seq");
    while (q.step()) {
      emit("quarantine", {{"entry_id", q.text(0)},
                          {"reason", q.text(1)},
                          {"sender", q.text(2)},
                          {"path", q.text(3)},
                          {"received_at", format_rfc3339(from_millis(q.int64(4)))}});
    }
  }
}

std::size_t EventStore::import_records(std::istream& in) {
  return transaction([&] {
    std::size_t inserted = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::invalid_argument, fmt::format("dump line {}: {}", line_no, e.what()));
      }
      const auto type = j.value("type", std::string{});
      int changes = 0;
      try {
        if (type == "camera") {
          auto c = j.get<CameraSource>();
          Stmt q(db_,
                 "INSERT OR IGNORE INTO cameras (camera_id, name, lat, lon, smtp_sender, "
                 "ir_sensitivity, active) VALUES (?,?,?,?,?,?,?)");
          std::optional<double> lat, lon;
          if (c.location) {
            lat = c.location->lat;
            lon = c.location->lon;
          }
          q.bind_all(c.camera_id, c.name, lat, lon, c.smtp_sender,
                     std::string(to_string(c.ir_sensitivity)), c.active ? 1 : 0);
          changes = q.run();
        } else if (type == "alert_rule") {
          j.erase("type");
          auto r = j.get<AlertRule>();
          Stmt q(db_, "INSERT OR IGNORE INTO alert_rules (rule_id, body) VALUES (?,?)");
          q.bind_all(r.rule_id, nlohmann::json(r).dump());
          changes = q.run();
        } else if (type == "asset") {
          auto a = j.get<ImageAsset>();
          Stmt q(db_,
                 "INSERT OR IGNORE INTO assets (asset_id, content_hash, width, height, dpi, "
                 "camera_id, received_at, trigger_time, storage_key, alerts_done) "
                 "VALUES (?,?,?,?,?,?,?,?,?,1)");
          q.bind_all(a.asset_id, a.content_hash, a.width, a.height, a.dpi, a.camera_id,
                     to_millis(a.received_at), to_millis(a.trigger_time), a.storage_key);
          changes = q.run();
        } else if (type == "detection") {
          auto d = j.get<Detection>();
          Stmt idx(db_, "SELECT COUNT(*) FROM detections WHERE asset_id = ?");
          idx.bind_all(d.asset_id);
          idx.step();
          Stmt q(db_,
                 "INSERT OR IGNORE INTO detections (detection_id, asset_id, idx, x_min, y_min, "
                 "x_max, y_max, class_id, confidence, model_version) VALUES (?,?,?,?,?,?,?,?,?,?)");
          q.bind_all(d.detection_id, d.asset_id, idx.int64(0), d.box.x_min, d.box.y_min,
                     d.box.x_max, d.box.y_max, d.class_id, d.confidence, d.model_version);
          changes = q.run();
        } else if (type == "verdict") {
          auto v = j.get<HumanVerdict>();
          const auto detection_id = j.at("detection_id").get<std::string>();
          std::optional<std::int64_t> cls;
          std::optional<std::string> sentinel;
          if (v.is_class()) {
            cls = v.true_class_id();
          } else {
            sentinel = std::string(to_string(std::get<VerdictSentinel>(v.truth)));
          }
          Stmt exists(db_,
                      "SELECT 1 FROM verdicts WHERE detection_id = ? AND reviewer = ? AND "
                      "reviewed_at = ? AND true_class_id IS ? AND sentinel IS ?");
          exists.bind_all(detection_id, v.reviewer, to_millis(v.reviewed_at), cls, sentinel);
          if (!exists.step()) {
            Stmt q(db_,
                   "INSERT INTO verdicts (detection_id, true_class_id, sentinel, reviewer, "
                   "reviewed_at) VALUES (?,?,?,?,?)");
            q.bind_all(detection_id, cls, sentinel, v.reviewer, to_millis(v.reviewed_at));
            changes = q.run();
          }
        } else if (type == "alert") {
          auto a = j.get<AlertEvent>();
          Stmt q(db_,
                 "INSERT OR IGNORE INTO alerts (alert_id, rule_id, detection_id, camera_id, "
                 "class_id, event_time, fired_at, status, attempts, last_error) "
                 "VALUES (?,?,?,?,?,?,?,?,?,?)");
          q.bind_all(a.alert_id, a.rule_id, a.detection_id, a.camera_id, a.class_id,
                     to_millis(a.event_time), to_millis(a.fired_at), std::string(to_string(a.status)),
                     a.attempts, a.last_error);
          changes = q.run();
        } else if (type == "quarantine") {
          auto t = parse_rfc3339(j.at("received_at").get<std::string>());
          if (!t) throw Error(Errc::invalid_argument, fmt::format("dump line {}: bad time", line_no));
          Stmt q(db_,
                 "INSERT OR IGNORE INTO quarantine (entry_id, reason, sender, path, received_at) "
                 "VALUES (?,?,?,?,?)");
          q.bind_all(j.at("entry_id").get<std::string>(), j.at("reason").get<std::string>(),
                     j.at("sender").get<std::string>(), j.at("path").get<std::string>(),
                     to_millis(*t));
          changes = q.run();
        } else {
          throw Error(Errc::invalid_argument,
                      fmt::format("dump line {}: unknown record type '{}'", line_no, type));
        }
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::invalid_argument, fmt::format("dump line {}: {}", line_no, e.what()));
      }
      inserted += static_cast<std::size_t>(changes);
    }
    return inserted;
  });
}

std::vector<std::string> EventStore::check_consistency() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> problems;
  {
    Stmt q(db_, "PRAGMA integrity_check");
    while (q.step()) {
      auto row = q.text(0);
      if (row != "ok") problems.push_back("integrity_check: " + row);
    }
  }
  {
    Stmt q(db_, "PRAGMA foreign_key_check");
    while (q.step()) problems.push_back(fmt::format("dangling reference in {}", q.text(0)));
  }
  {
    Stmt q(db_, "SELECT asset_id, storage_key FROM assets ORDER BY seq");
    while (q.step()) {
      std::error_code ec;
      if (!fs::exists(dir_ / q.text(1), ec)) {
        problems.push_back(fmt::format("asset {} has no blob {}", q.text(0), q.text(1)));
      }
    }
  }
  return problems;
}

}  // namespace trapwatch::store
