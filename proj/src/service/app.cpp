#include "trapwatch/service/app.hpp"

#include <csignal>
#include <optional>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "trapwatch/alert/delivery.hpp"
#include "trapwatch/alert/engine.hpp"
#include "trapwatch/core/catalog.hpp"
#include "trapwatch/core/error.hpp"
#include "trapwatch/gateway/detector.hpp"
#include "trapwatch/ingest/acceptor.hpp"
#include "trapwatch/ingest/spool.hpp"
#include "trapwatch/service/api.hpp"
#include "trapwatch/service/pipeline.hpp"

namespace trapwatch::service {
namespace {

std::map<std::string, std::string> parse_users(const std::string& text) {
  std::map<std::string, std::string> users;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find(',', pos);
    if (end == std::string::npos) end = text.size();
    auto item = text.substr(pos, end - pos);
    if (!item.empty()) {
      auto colon = item.find(':');
      if (colon == std::string::npos || colon == 0) {
        throw Error(Errc::config_error, "SMTP_USERS entries must be user:password");
      }
      users[item.substr(0, colon)] = item.substr(colon + 1);
    }
    pos = end + 1;
  }
  return users;
}

std::shared_ptr<gateway::DetectorBackend> make_backend(const ServiceConfig& c) {
  if (c.detector == "remote") {
    gateway::RemoteConfig rc;
    rc.endpoint = c.detector_endpoint;
    rc.model_name = c.model_name;
    return std::make_shared<gateway::RemoteBackend>(rc);
  }
  if (c.mock_table.empty()) return std::make_shared<gateway::MockBackend>();
  return std::make_shared<gateway::MockBackend>(gateway::MockBackend::load(c.mock_table));
}

}  // namespace

struct Application::Impl {
  explicit Impl(ServiceConfig c) : config(std::move(c)) {}

  ServiceConfig config;
  std::optional<SpeciesCatalog> own_catalog;
  const SpeciesCatalog* catalog = &SpeciesCatalog::default_catalog();
  std::unique_ptr<store::EventStore> store;
  std::unique_ptr<gateway::Detector> detector;
  std::unique_ptr<alert::DeliveryPool> delivery;
  std::unique_ptr<ingest::SpoolQueue> spool;
  std::unique_ptr<ingest::MessageAcceptor> acceptor;
  std::unique_ptr<Pipeline> pipeline;
  std::unique_ptr<IngestWorkers> workers;
  std::unique_ptr<ingest::SmtpServer> smtp;
  std::unique_ptr<ApiServer> api;
  bool started = false;
};

Application::Application(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
  validate(impl_->config);
}

Application::~Application() { stop(); }

void Application::start() {
  auto& s = *impl_;
  if (s.started) return;
  const auto& c = s.config;

  if (!c.catalog_file.empty()) {
    s.own_catalog = SpeciesCatalog::load(c.catalog_file);
    s.catalog = &*s.own_catalog;
  }
  s.store = store::EventStore::open(c.data_dir);
  if (c.seed_default_rule && s.store->all_rules().empty() && s.store->asset_count() == 0) {
    s.store->put_rule(alert::default_rule());
  }

  gateway::DetectorConfig dc;
  dc.model_name = c.model_name;
  dc.model_version = c.model_version;
  dc.confidence_threshold = c.confidence_threshold;
  dc.nms = c.nms;
  s.detector = std::make_unique<gateway::Detector>(make_backend(c), dc, *s.catalog);

  alert::DeliveryConfig del;
  del.attempts = c.delivery_attempts;
  del.backoff = std::chrono::milliseconds(c.delivery_backoff_ms);
  del.timeout = std::chrono::milliseconds(c.delivery_timeout_ms);
  del.workers = c.delivery_workers;
  del.smtp_relay = c.smtp_relay;
  del.mail_from = c.mail_from;
  del.public_base_url = c.public_base_url;
  s.delivery = std::make_unique<alert::DeliveryPool>(*s.store, del, *s.catalog);
  if (auto n = s.delivery->resume_pending(); n > 0) spdlog::info("resuming {} pending alerts", n);

  s.spool = std::make_unique<ingest::SpoolQueue>(c.effective_queue_dir(), c.queue_capacity);
  if (auto n = s.spool->depth(); n > 0) spdlog::info("{} spooled events from an earlier run", n);

  ingest::AcceptConfig ac;
  ac.max_attachment_bytes = c.max_attachment_mb * 1024u * 1024u;
  ac.quarantine_dir = c.effective_quarantine_dir();
  s.acceptor = std::make_unique<ingest::MessageAcceptor>(*s.store, ac);

  s.pipeline = std::make_unique<Pipeline>(*s.store, *s.detector, s.delivery.get(), *s.catalog);
  s.workers = std::make_unique<IngestWorkers>(*s.spool, *s.pipeline, *s.acceptor, c.ingest_workers);
  s.workers->start();

  ingest::SmtpConfig sc;
  sc.bind = net::parse_endpoint(c.smtp_bind, "0.0.0.0", ingest::kDefaultSmtpPort);
  sc.max_message_bytes = std::max<std::size_t>(sc.max_message_bytes, ac.max_attachment_bytes * 2);
  sc.tls_cert = c.smtp_tls_cert;
  sc.tls_key = c.smtp_tls_key;
  sc.users = parse_users(c.smtp_users);
  sc.require_auth = c.smtp_require_auth;
  s.smtp = std::make_unique<ingest::SmtpServer>(
      sc, [this](const ingest::SmtpEnvelope& env, std::string data) {
        return handle_message(env, std::move(data));
      });
  s.smtp->start();

  s.api = std::make_unique<ApiServer>(ApiDependencies{*s.store, *s.pipeline, *s.catalog, s.config,
                                                      s.delivery.get(), s.spool.get()});
  s.api->start(net::parse_endpoint(c.api_bind, "0.0.0.0", 8080));
  s.started = true;
  spdlog::info("serving: API port {}, SMTP port {}, detector {}", api_port(), smtp_port(),
               c.detector);
}

void Application::stop() {
  auto& s = *impl_;
  if (s.smtp) s.smtp->stop();
  if (s.api) s.api->stop();
  if (s.workers) s.workers->stop();
  if (s.spool) s.spool->close();
  if (s.delivery) s.delivery->stop();
  s.started = false;
}

std::uint16_t Application::api_port() const noexcept { return impl_->api ? impl_->api->port() : 0; }
std::uint16_t Application::smtp_port() const noexcept {
  return impl_->smtp ? impl_->smtp->port() : 0;
}

store::EventStore& Application::store() {
  if (!impl_->store) throw Error(Errc::not_found, "application is not started");
  return *impl_->store;
}

ingest::SmtpReply Application::handle_message(const ingest::SmtpEnvelope& env, std::string data) {
  auto& s = *impl_;
  const auto now = now_utc();
  auto r = s.acceptor->accept(data, env.mail_from, now);
  switch (r.status) {
    case ingest::AcceptStatus::rejected:
      return {r.smtp_code, r.reason};
    case ingest::AcceptStatus::quarantined:
      return {250, "OK, held for review"};
    case ingest::AcceptStatus::deduplicated:
      if (!r.message_id.empty()) s.store->record_message(r.message_id, now);
      return {250, "OK, already received"};
    case ingest::AcceptStatus::accepted:
      break;
  }
  try {
    s.spool->enqueue(r.events);
  } catch (const Error& e) {
    spdlog::warn("spool refused {} events from {}: {}", r.events.size(), env.mail_from, e.what());
    return {451, e.code() == Errc::queue_full ? "4.3.1 ingest queue full, try again later"
                                              : "4.3.0 temporary storage failure"};
  }
  if (!r.message_id.empty()) {
    try {
      s.store->record_message(r.message_id, now);
    } catch (const Error& e) {
      // The events are queued; a resend is caught by content dedup.
      spdlog::warn("message id not recorded: {}", e.what());
    }
  }
  return {250, fmt::format("OK, {} image(s) queued", r.events.size())};
}

ShutdownSignal::ShutdownSignal() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

int ShutdownSignal::wait() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
  return sig;
}

}  // namespace trapwatch::service
