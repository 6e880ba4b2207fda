#include "trapwatch/alert/delivery.hpp"

#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "trapwatch/alert/engine.hpp"
#include "trapwatch/core/error.hpp"
#include "trapwatch/core/socket.hpp"

namespace trapwatch::alert {
namespace {

std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme = url.find("://");
  auto path_at = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_at == std::string::npos) return {url, "/"};
  return {url.substr(0, path_at), url.substr(path_at)};
}

void set_timeouts(httplib::Client& client, std::chrono::milliseconds timeout) {
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
}

// One attempt; empty string on success.
std::string post_webhook(const std::string& url, const std::string& alert_id,
                         const std::string& body, std::chrono::milliseconds timeout) {
  const auto [base, path] = split_url(url);
  httplib::Client client(base);
  set_timeouts(client, timeout);
  httplib::Headers headers{{"X-Alert-Id", alert_id}};
  auto res = client.Post(path, headers, body, "application/json");
  if (!res) return fmt::format("webhook {}: {}", url, httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    return fmt::format("webhook {} answered HTTP {}", url, res->status);
  }
  return {};
}

bool expect(net::LineReader& reader, int code, std::string& last) {
  // Multi-line replies repeat the code with '-' until the final line.
  while (reader.read_line(last)) {
    if (last.size() < 3) return false;
    if (last.size() > 3 && last[3] == '-') continue;
    return std::atoi(last.substr(0, 3).c_str()) == code;
  }
  return false;
}

}  // namespace

void send_mail(const std::string& relay, const std::string& from, const std::string& to,
               const std::string& subject, const std::string& body,
               std::chrono::milliseconds timeout) {
  if (relay.empty()) throw Error(Errc::sink_unreachable, "no mail relay configured");
  auto ep = net::parse_endpoint(relay, "127.0.0.1", 25);
  net::Socket sock;
  try {
    sock = net::connect_tcp(ep, timeout);
  } catch (const Error& e) {
    throw Error(Errc::sink_unreachable, e.what());
  }
  sock.set_timeouts(timeout, timeout);
  net::PlainStream stream(sock.fd());
  net::LineReader reader(&stream);
  std::string line;
  auto step = [&](const std::string& cmd, int code) {
    if (!cmd.empty() && !stream.write_all(cmd + "\r\n")) {
      throw Error(Errc::sink_unreachable, "mail relay closed the connection");
    }
    if (!expect(reader, code, line)) {
      throw Error(Errc::sink_unreachable,
                  fmt::format("mail relay rejected '{}': {}", cmd.substr(0, 16), line));
    }
  };
  step("", 220);
  step("EHLO trapwatch", 250);
  step(fmt::format("MAIL FROM:<{}>", from), 250);
  step(fmt::format("RCPT TO:<{}>", to), 250);
  step("DATA", 354);
  std::string msg = fmt::format(
      "From: <{}>\r\nTo: <{}>\r\nSubject: {}\r\nDate: {}\r\nContent-Type: application/json\r\n\r\n",
      from, to, subject, format_rfc3339(now_utc()));
  // Dot-stuffing.
  std::size_t start = 0;
  while (start <= body.size()) {
    auto nl = body.find('\n', start);
    std::string l = body.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    if (!l.empty() && l.back() == '\r') l.pop_back();
    if (!l.empty() && l.front() == '.') l.insert(l.begin(), '.');
    msg += l + "\r\n";
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  msg += ".";
  step(msg, 250);
  stream.write_all("QUIT\r\n");
}

DeliveryOutcome deliver(const AlertSink& sink, const std::string& alert_id,
                        const nlohmann::json& payload, const DeliveryConfig& config) {
  DeliveryOutcome out;
  if (sink.kind == SinkKind::log) {
    spdlog::info("alert {}", payload.dump());
    out.state = DeliveryState::delivered;
    out.attempts = 1;
    return out;
  }
  const std::string body = payload.dump();
  auto delay = config.backoff;
  for (int attempt = 1; attempt <= config.attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    out.attempts = attempt;
    if (sink.kind == SinkKind::webhook) {
      out.error = post_webhook(sink.target, alert_id, body, config.timeout);
    } else {
      try {
        send_mail(config.smtp_relay, config.mail_from, sink.target,
                  fmt::format("Trapwatch alert {}", alert_id), body, config.timeout);
        out.error.clear();
      } catch (const std::exception& e) {
        out.error = e.what();
      }
    }
    if (out.error.empty()) {
      out.state = DeliveryState::delivered;
      return out;
    }
    spdlog::warn("alert {} attempt {}/{}: {}", alert_id, attempt, config.attempts, out.error);
  }
  out.state = DeliveryState::failed;
  return out;
}

DeliveryPool::DeliveryPool(store::EventStore& store, DeliveryConfig config,
                           const SpeciesCatalog& catalog)
    : store_(store), config_(std::move(config)), catalog_(catalog) {
  const auto n = std::max<std::size_t>(1, config_.workers);
  for (std::size_t i = 0; i < n; ++i) threads_.emplace_back([this] { run(); });
}

DeliveryPool::~DeliveryPool() { stop(); }

void DeliveryPool::submit(AlertEvent alert) {
  {
    std::lock_guard lock(mutex_);
    if (stopping_) return;
    queue_.push_back(std::move(alert));
  }
  cv_.notify_one();
}

std::size_t DeliveryPool::resume_pending() {
  auto pending = store_.alerts_with_status(DeliveryState::pending);
  for (auto& a : pending) submit(std::move(a));
  return pending.size();
}

void DeliveryPool::replay(const std::string& alert_id) {
  auto alert = store_.get_alert(alert_id);
  if (!alert) throw Error(Errc::not_found, fmt::format("no alert {}", alert_id));
  store_.update_alert_status(alert_id, DeliveryState::pending, alert->attempts, alert->last_error);
  alert->status = DeliveryState::pending;
  submit(std::move(*alert));
}

bool DeliveryPool::wait_idle(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  return idle_cv_.wait_for(lock, timeout, [this] { return queue_.empty() && busy_ == 0; });
}

void DeliveryPool::stop() {
  {
    std::lock_guard lock(mutex_);
    if (stopping_ && threads_.empty()) return;
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
  threads_.clear();
}

void DeliveryPool::on_outcome(AttemptHook hook) {
  std::lock_guard lock(mutex_);
  hook_ = std::move(hook);
}

void DeliveryPool::run() {
  for (;;) {
    AlertEvent alert;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      alert = std::move(queue_.front());
      queue_.pop_front();
      ++busy_;
    }
    deliver_one(alert);
    {
      std::lock_guard lock(mutex_);
      --busy_;
      if (queue_.empty() && busy_ == 0) idle_cv_.notify_all();
    }
  }
}

void DeliveryPool::deliver_one(const AlertEvent& alert) {
  DeliveryOutcome outcome;
  try {
    auto rule = store_.get_rule(alert.rule_id);
    auto detection = store_.get_detection(alert.detection_id);
    if (!rule || !detection) {
      outcome.state = DeliveryState::failed;
      outcome.error = "rule or detection no longer exists";
    } else {
      std::optional<CameraSource> camera;
      if (alert.camera_id) camera = store_.get_camera(*alert.camera_id);
      const auto url = fmt::format("{}/api/assets/{}/image", config_.public_base_url,
                                   detection->asset_id);
      const auto payload = alert_payload(alert, *detection, camera, catalog_, url);
      outcome = deliver(rule->sink, alert.alert_id, payload, config_);
      outcome.attempts += alert.attempts;
    }
    store_.update_alert_status(alert.alert_id, outcome.state, outcome.attempts, outcome.error);
  } catch (const std::exception& e) {
    spdlog::error("alert {} delivery bookkeeping failed: {}", alert.alert_id, e.what());
    outcome.state = DeliveryState::failed;
    outcome.error = e.what();
  }
  AttemptHook hook;
  {
    std::lock_guard lock(mutex_);
    hook = hook_;
  }
  if (hook) hook(alert, outcome);
}

}  // namespace trapwatch::alert
