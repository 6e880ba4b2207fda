#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "trapwatch/alert/delivery.hpp"
#include "trapwatch/core/catalog.hpp"
#include "trapwatch/core/types.hpp"
#include "trapwatch/gateway/detector.hpp"
#include "trapwatch/ingest/acceptor.hpp"
#include "trapwatch/ingest/spool.hpp"
#include "trapwatch/store/store.hpp"

namespace trapwatch::service {

struct ProcessRequest {
  std::string bytes;
  std::optional<std::string> camera_id;
  Timestamp received_at{};
  std::optional<Timestamp> trigger_time;
};

struct ProcessResult {
  ImageAsset asset;
  std::vector<Detection> detections;
  bool duplicate = false;
  std::vector<AlertEvent> alerts;
};

/// hash -> dedup -> decode -> detect -> blob -> asset + detections ->
/// alerts -> delivery. SMTP events and uploads share this path.
class Pipeline {
 public:
  Pipeline(store::EventStore& store, const gateway::Detector& detector,
           alert::DeliveryPool* delivery, const SpeciesCatalog& catalog);

  /// Throws Errc::undecodable_image, backend errors and store errors.
  ProcessResult process(const ProcessRequest& request) const;

 private:
  std::vector<AlertEvent> fire(const std::string& asset_id) const;

  store::EventStore& store_;
  const gateway::Detector& detector_;
  alert::DeliveryPool* delivery_;
  const SpeciesCatalog& catalog_;
};

/// Threads draining the spool into the pipeline. Images that cannot be
/// decoded are quarantined; transient backend failures put the event back.
class IngestWorkers {
 public:
  using ProcessedHook = std::function<void(const ingest::IngestEvent&, const ProcessResult&)>;

  IngestWorkers(ingest::SpoolQueue& spool, const Pipeline& pipeline,
                ingest::MessageAcceptor& acceptor, std::size_t threads,
                std::chrono::milliseconds retry_delay = std::chrono::milliseconds(500));
  ~IngestWorkers();
  IngestWorkers(const IngestWorkers&) = delete;
  IngestWorkers& operator=(const IngestWorkers&) = delete;

  void on_processed(ProcessedHook hook) { hook_ = std::move(hook); }
  void start();
  void stop();
  std::size_t processed() const noexcept { return processed_.load(); }

 private:
  void run();
  void handle(const ingest::SpoolItem& item);

  ingest::SpoolQueue& spool_;
  const Pipeline& pipeline_;
  ingest::MessageAcceptor& acceptor_;
  std::size_t thread_count_;
  std::chrono::milliseconds retry_delay_;
  ProcessedHook hook_;
  std::atomic<bool> running_{false};
  std::atomic<std::size_t> processed_{0};
  std::vector<std::thread> threads_;
};

}  // namespace trapwatch::service
