#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "trapwatch/ingest/smtp_server.hpp"
#include "trapwatch/service/config.hpp"
#include "trapwatch/store/store.hpp"

namespace trapwatch::service {

/// The `serve` process: store, detector, spool, ingest workers, alert
/// delivery, SMTP listener and REST API wired together.
class Application {
 public:
  explicit Application(ServiceConfig config);
  ~Application();
  Application(const Application&) = delete;
  Application& operator=(const Application&) = delete;

  /// Opens everything and starts listening. Pending spool events and
  /// undelivered alerts from an earlier run are picked up.
  void start();
  /// Stops listeners first, then workers. Safe to call twice.
  void stop();

  std::uint16_t api_port() const noexcept;
  std::uint16_t smtp_port() const noexcept;
  store::EventStore& store();

  /// The SMTP DATA handler: accept, spool durably, then answer. A 250
  /// reply is only sent once the events are on disk.
  ingest::SmtpReply handle_message(const ingest::SmtpEnvelope& envelope, std::string data);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocks SIGINT and SIGTERM in the calling thread (call before starting
/// threads so they inherit the mask) and returns a waiter for them.
class ShutdownSignal {
 public:
  ShutdownSignal();
  /// Returns the signal number received.
  int wait();
};

}  // namespace trapwatch::service
