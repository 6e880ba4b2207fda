#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "trapwatch/core/alerting.hpp"
#include "trapwatch/core/catalog.hpp"
#include "trapwatch/store/store.hpp"

namespace trapwatch::alert {

struct DeliveryConfig {
  int attempts = 3;
  std::chrono::milliseconds backoff{200};
  std::chrono::milliseconds timeout{5000};
  std::size_t workers = 2;
  /// host:port of the outgoing mail relay for email sinks.
  std::string smtp_relay;
  std::string mail_from = "alerts@trapwatch.invalid";
  /// Prefix for image URLs in payloads, e.g. http://host:8080.
  std::string public_base_url;
};

struct DeliveryOutcome {
  DeliveryState state = DeliveryState::pending;
  int attempts = 0;
  std::string error;
};

/// One delivery with retries. Never throws; failures come back as
/// DeliveryState::failed with the attempt count.
DeliveryOutcome deliver(const AlertSink& sink, const std::string& alert_id,
                        const nlohmann::json& payload, const DeliveryConfig& config);

/// Plain SMTP submission (no auth, no TLS) to a relay.
/// Throws Errc::sink_unreachable.
void send_mail(const std::string& relay, const std::string& from, const std::string& to,
               const std::string& subject, const std::string& body,
               std::chrono::milliseconds timeout);

/// Worker threads that deliver alerts and record the outcome in the store.
/// Slow sinks only occupy their own worker.
class DeliveryPool {
 public:
  using AttemptHook = std::function<void(const AlertEvent&, const DeliveryOutcome&)>;

  DeliveryPool(store::EventStore& store, DeliveryConfig config,
               const SpeciesCatalog& catalog = SpeciesCatalog::default_catalog());
  ~DeliveryPool();
  DeliveryPool(const DeliveryPool&) = delete;
  DeliveryPool& operator=(const DeliveryPool&) = delete;

  void submit(AlertEvent alert);
  /// Re-queues every alert still pending in the store (after a restart).
  std::size_t resume_pending();
  /// Re-queues a failed alert. Throws Errc::not_found.
  void replay(const std::string& alert_id);

  /// Blocks until the queue is drained and no delivery is running.
  bool wait_idle(std::chrono::milliseconds timeout);
  void stop();
  void on_outcome(AttemptHook hook);

 private:
  void run();
  void deliver_one(const AlertEvent& alert);

  store::EventStore& store_;
  DeliveryConfig config_;
  const SpeciesCatalog& catalog_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<AlertEvent> queue_;
  std::size_t busy_ = 0;
  bool stopping_ = false;
  AttemptHook hook_;
  std::vector<std::thread> threads_;
};

}  // namespace trapwatch::alert
