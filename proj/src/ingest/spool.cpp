#include "trapwatch/ingest/spool.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "trapwatch/core/error.hpp"
#include "trapwatch/core/hash.hpp"

namespace trapwatch::ingest {
namespace {

namespace fs = std::filesystem;

constexpr std::string_view kSuffix = ".evt";
constexpr std::string_view kCommitPrefix = ".commit-";

void fsync_dir(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

void write_synced(const fs::path& path, std::string_view data) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(Errc::io_error, fmt::format("cannot create {}", path.string()));
  std::size_t done = 0;
  while (done < data.size()) {
    const auto n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0 && errno == EINTR) continue;
    if (n < 0) {
      ::close(fd);
      throw Error(Errc::io_error, fmt::format("write failed on {}", path.string()));
    }
    done += static_cast<std::size_t>(n);
  }
  const bool ok = ::fsync(fd) == 0;
  ::close(fd);
  if (!ok) throw Error(Errc::io_error, fmt::format("fsync failed on {}", path.string()));
}

}  // namespace

SpoolQueue::SpoolQueue(fs::path dir, std::size_t capacity) : dir_(std::move(dir)), capacity_(capacity) {
  if (capacity_ == 0) throw Error(Errc::config_error, "queue capacity must be positive");
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(Errc::io_error, fmt::format("cannot create {}: {}", dir_.string(), ec.message()));
  // A commit record lists a group whose renames must all happen.
  for (const auto& entry : fs::directory_iterator(dir_)) {
    const auto name = entry.path().filename().string();
    if (name.rfind(kCommitPrefix, 0) != 0) continue;
    std::ifstream in(entry.path());
    std::string event;
    while (std::getline(in, event)) {
      if (!event.empty() && fs::exists(dir_ / (".tmp-" + event))) fs::rename(dir_ / (".tmp-" + event), dir_ / event);
    }
    fsync_dir(dir_);
    fs::remove(entry.path(), ec);
  }
  for (const auto& entry : fs::directory_iterator(dir_)) {
    const auto name = entry.path().filename().string();
    if (name.rfind(".tmp-", 0) == 0) {
      fs::remove(entry.path(), ec);  // interrupted enqueue, never acknowledged
    } else if (name.front() != '.' && name.size() > kSuffix.size() &&
               name.compare(name.size() - kSuffix.size(), kSuffix.size(), kSuffix) == 0) {
      pending_.insert(name);
    }
  }
  if (!pending_.empty()) spdlog::info("spool {}: {} event(s) left from a previous run", dir_.string(), pending_.size());
}

std::string SpoolQueue::encode(const IngestEvent& e) {
  nlohmann::json head{{"event_id", e.event_id},
                      {"camera_id", e.camera_id},
                      {"declared_filename", e.declared_filename},
                      {"content_type", e.content_type},
                      {"message_id", e.message_id},
                      {"sender", e.sender},
                      {"trigger_time", to_millis(e.trigger_time)},
                      {"receipt_time", to_millis(e.receipt_time)},
                      {"size", e.image_bytes.size()}};
  return head.dump() + "\n" + e.image_bytes;
}

IngestEvent SpoolQueue::decode(std::string_view data) {
  auto nl = data.find('\n');
  if (nl == std::string_view::npos) throw Error(Errc::io_error, "spool file has no header");
  IngestEvent e;
  try {
    auto head = nlohmann::json::parse(data.substr(0, nl));
    e.event_id = head.at("event_id").get<std::string>();
    e.camera_id = head.at("camera_id").get<std::string>();
    e.declared_filename = head.at("declared_filename").get<std::string>();
    e.content_type = head.at("content_type").get<std::string>();
    e.message_id = head.at("message_id").get<std::string>();
    e.sender = head.at("sender").get<std::string>();
    e.trigger_time = from_millis(head.at("trigger_time").get<std::int64_t>());
    e.receipt_time = from_millis(head.at("receipt_time").get<std::int64_t>());
    const auto size = head.at("size").get<std::size_t>();
    if (data.size() - nl - 1 != size) throw Error(Errc::io_error, "spool file is truncated");
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::io_error, fmt::format("spool header: {}", ex.what()));
  }
  e.image_bytes = std::string(data.substr(nl + 1));
  return e;
}

void SpoolQueue::enqueue(const std::vector<IngestEvent>& events) {
  if (events.empty()) return;
  std::vector<std::string> names;
  {
    std::lock_guard lock(mutex_);
    if (pending_.size() + claimed_.size() + reserved_ + events.size() > capacity_) {
      throw Error(Errc::queue_full,
                  fmt::format("spool holds {} of {} events", pending_.size() + claimed_.size() + reserved_,
                              capacity_));
    }
    reserved_ += events.size();
    const auto ms = to_millis(now_utc());
    for (const auto& e : events) {
      names.push_back(fmt::format("{:020}-{:010}-{}{}", ms, counter_++, e.event_id, kSuffix));
    }
  }
  // Files are staged under temporary names; the commit record is the point
  // after which a restart finishes the renames instead of discarding them.
  const auto commit = dir_ / (std::string(kCommitPrefix) + names.front());
  bool committed = false;
  try {
    std::string listing;
    for (std::size_t i = 0; i < events.size(); ++i) {
      write_synced(dir_ / (".tmp-" + names[i]), encode(events[i]));
      listing += names[i] + "\n";
    }
    const auto staged = dir_ / (".tmp-commit-" + names.front());
    write_synced(staged, listing);
    fs::rename(staged, commit);
    fsync_dir(dir_);
    committed = true;
    for (const auto& n : names) fs::rename(dir_ / (".tmp-" + n), dir_ / n);
    fsync_dir(dir_);
    fs::remove(commit);
  } catch (...) {
    std::error_code ec;
    if (!committed) {
      for (const auto& n : names) fs::remove(dir_ / (".tmp-" + n), ec);
      fs::remove(dir_ / (".tmp-commit-" + names.front()), ec);
      fs::remove(commit, ec);
    }
    std::lock_guard lock(mutex_);
    reserved_ -= events.size();
    throw;
  }
  {
    std::lock_guard lock(mutex_);
    reserved_ -= events.size();
    for (auto& n : names) pending_.insert(std::move(n));
  }
  cv_.notify_all();
}

std::optional<SpoolItem> SpoolQueue::take(std::chrono::milliseconds timeout) {
  std::string name;
  {
    std::unique_lock lock(mutex_);
    if (!cv_.wait_for(lock, timeout, [this] { return closed_ || !pending_.empty(); })) return std::nullopt;
    if (closed_) return std::nullopt;
    name = *pending_.begin();
    pending_.erase(pending_.begin());
    claimed_.insert(name);
  }
  try {
    std::ifstream in(dir_ / name, std::ios::binary);
    if (!in) throw Error(Errc::io_error, fmt::format("spool file {} vanished", name));
    std::ostringstream ss;
    ss << in.rdbuf();
    return SpoolItem{name, decode(ss.str())};
  } catch (const Error& e) {
    // Unreadable entries are moved aside rather than retried forever.
    spdlog::error("spool {}: {}", name, e.what());
    std::error_code ec;
    fs::rename(dir_ / name, dir_ / (name + ".bad"), ec);
    std::lock_guard lock(mutex_);
    claimed_.erase(name);
    return std::nullopt;
  }
}

void SpoolQueue::ack(const SpoolItem& item) {
  std::error_code ec;
  fs::remove(dir_ / item.name, ec);
  fsync_dir(dir_);
  std::lock_guard lock(mutex_);
  claimed_.erase(item.name);
}

void SpoolQueue::release(const SpoolItem& item) {
  {
    std::lock_guard lock(mutex_);
    if (claimed_.erase(item.name)) pending_.insert(item.name);
  }
  cv_.notify_one();
}

void SpoolQueue::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  cv_.notify_all();
}

std::size_t SpoolQueue::depth() const {
  std::lock_guard lock(mutex_);
  return pending_.size() + claimed_.size();
}

}  // namespace trapwatch::ingest
