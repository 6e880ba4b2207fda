#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "trapwatch/ingest/event.hpp"

namespace trapwatch::ingest {

/// A claimed event; ack() deletes it, release() puts it back.
struct SpoolItem {
  std::string name;
  IngestEvent event;
};

/// Durable FIFO in a directory: one file per event, written to a temporary
/// name, fsynced, then renamed into place. Files survive restarts until
/// acknowledged, so delivery to the processor is at-least-once.
class SpoolQueue {
 public:
  SpoolQueue(std::filesystem::path dir, std::size_t capacity);

  /// All-or-nothing with respect to capacity. Throws Errc::queue_full when
  /// the events do not fit, Errc::io_error on write failure.
  void enqueue(const std::vector<IngestEvent>& events);
  void enqueue(const IngestEvent& event) { enqueue(std::vector<IngestEvent>{event}); }

  /// Oldest unclaimed event, waiting up to `timeout`.
  std::optional<SpoolItem> take(std::chrono::milliseconds timeout);
  void ack(const SpoolItem& item);
  void release(const SpoolItem& item);
  /// Wakes every waiter in take() and makes it return nullopt.
  void close();

  /// Events on disk, claimed or not.
  std::size_t depth() const;
  std::size_t capacity() const noexcept { return capacity_; }
  const std::filesystem::path& directory() const noexcept { return dir_; }

  /// Serialized form: one JSON header line, then the raw image bytes.
  static std::string encode(const IngestEvent& event);
  static IngestEvent decode(std::string_view data);

 private:
  std::filesystem::path dir_;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::set<std::string> pending_;
  std::set<std::string> claimed_;
  std::size_t reserved_ = 0;
  std::uint64_t counter_ = 0;
  bool closed_ = false;
};

}  // namespace trapwatch::ingest
