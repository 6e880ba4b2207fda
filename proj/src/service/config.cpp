#include "trapwatch/service/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "trapwatch/core/error.hpp"

namespace trapwatch::service {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw Error(Errc::config_error, fmt::format("{}: cannot use '{}'", key, value));
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v);
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    double d = std::stod(std::string(v), &used);
    if (used != v.size()) bad_value(key, v);
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v);
  }
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  bad_value(key, v);
}

}  // namespace

const std::map<std::string, std::string>& config_keys() {
  static const std::map<std::string, std::string> keys{
      {"API_BIND", "host:port of the REST API (default 0.0.0.0:8080)"},
      {"SMTP_BIND", "host:port of the SMTP listener (default 0.0.0.0:2525)"},
      {"AUTH_TOKEN", "bearer token required on /api (empty disables auth)"},
      {"ANONYMOUS_READ", "allow GET requests without a token"},
      {"DETECTOR", "mock or remote"},
      {"DETECTOR_ENDPOINT", "inference server base URL for DETECTOR=remote"},
      {"MODEL_NAME", "model name on the inference server"},
      {"MODEL_VERSION", "version stamped on detections"},
      {"CONFIDENCE_THRESHOLD", "minimum detection score (default 0.387)"},
      {"NMS", "class-agnostic suppression of overlapping detections"},
      {"MAX_ATTACHMENT_MB", "largest accepted image (default 25)"},
      {"DATA_DIR", "store directory (database, blobs)"},
      {"QUEUE_DIR", "spool directory (default DATA_DIR/queue)"},
      {"QUARANTINE_DIR", "quarantine directory (default DATA_DIR/quarantine)"},
      {"MOCK_TABLE", "fixture table for DETECTOR=mock"},
      {"CATALOG_FILE", "species catalog TSV (default built-in)"},
      {"STATIC_DIR", "directory served at / (review console build)"},
      {"QUEUE_CAPACITY", "spooled events before SMTP answers 451"},
      {"INGEST_WORKERS", "threads processing the spool"},
      {"DELIVERY_WORKERS", "threads delivering alerts"},
      {"DELIVERY_ATTEMPTS", "attempts per alert delivery"},
      {"DELIVERY_BACKOFF_MS", "initial retry delay, doubled per attempt"},
      {"DELIVERY_TIMEOUT_MS", "per-attempt timeout"},
      {"SMTP_RELAY", "host:port of the outgoing relay for email sinks"},
      {"MAIL_FROM", "sender address of alert mail"},
      {"PUBLIC_BASE_URL", "prefix of image URLs in alert payloads"},
      {"SMTP_TLS_CERT", "PEM certificate chain enabling STARTTLS"},
      {"SMTP_TLS_KEY", "PEM private key for STARTTLS"},
      {"SMTP_USERS", "user:password pairs for AUTH PLAIN, comma separated"},
      {"SMTP_REQUIRE_AUTH", "refuse MAIL before AUTH"},
      {"SEED_DEFAULT_RULE", "create the example curlew rule in an empty store"},
      {"LOG_LEVEL", "trace, debug, info, warn, error"},
  };
  return keys;
}

void apply_setting(ServiceConfig& c, std::string_view key, std::string_view raw) {
  const std::string_view v = trim(raw);
  if (key == "API_BIND") c.api_bind = v;
  else if (key == "SMTP_BIND") c.smtp_bind = v;
  else if (key == "AUTH_TOKEN") c.auth_token = v;
  else if (key == "ANONYMOUS_READ") c.anonymous_read = to_bool(key, v);
  else if (key == "DETECTOR") c.detector = v;
  else if (key == "DETECTOR_ENDPOINT") c.detector_endpoint = v;
  else if (key == "MODEL_NAME") c.model_name = v;
  else if (key == "MODEL_VERSION") c.model_version = v;
  else if (key == "CONFIDENCE_THRESHOLD") c.confidence_threshold = to_double(key, v);
  else if (key == "NMS") c.nms = to_bool(key, v);
  else if (key == "MAX_ATTACHMENT_MB") c.max_attachment_mb = to_size(key, v);
  else if (key == "DATA_DIR") c.data_dir = std::string(v);
  else if (key == "QUEUE_DIR") c.queue_dir = std::string(v);
  else if (key == "QUARANTINE_DIR") c.quarantine_dir = std::string(v);
  else if (key == "MOCK_TABLE") c.mock_table = std::string(v);
  else if (key == "CATALOG_FILE") c.catalog_file = std::string(v);
  else if (key == "STATIC_DIR") c.static_dir = std::string(v);
  else if (key == "QUEUE_CAPACITY") c.queue_capacity = to_size(key, v);
  else if (key == "INGEST_WORKERS") c.ingest_workers = to_size(key, v);
  else if (key == "DELIVERY_WORKERS") c.delivery_workers = to_size(key, v);
  else if (key == "DELIVERY_ATTEMPTS") c.delivery_attempts = static_cast<int>(to_size(key, v));
  else if (key == "DELIVERY_BACKOFF_MS") c.delivery_backoff_ms = to_size(key, v);
  else if (key == "DELIVERY_TIMEOUT_MS") c.delivery_timeout_ms = to_size(key, v);
  else if (key == "SMTP_RELAY") c.smtp_relay = v;
  else if (key == "MAIL_FROM") c.mail_from = v;
  else if (key == "PUBLIC_BASE_URL") c.public_base_url = v;
  else if (key == "SMTP_TLS_CERT") c.smtp_tls_cert = v;
  else if (key == "SMTP_TLS_KEY") c.smtp_tls_key = v;
  else if (key == "SMTP_USERS") c.smtp_users = v;
  else if (key == "SMTP_REQUIRE_AUTH") c.smtp_require_auth = to_bool(key, v);
  else if (key == "SEED_DEFAULT_RULE") c.seed_default_rule = to_bool(key, v);
  else if (key == "LOG_LEVEL") c.log_level = v;
  else throw Error(Errc::config_error, fmt::format("unknown setting '{}'", key));
}

void apply_config_text(ServiceConfig& config, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view l = trim(line);
    if (l.empty() || l.front() == '#') continue;
    auto eq = l.find('=');
    if (eq == std::string_view::npos) {
      throw Error(Errc::config_error, fmt::format("config line {}: expected KEY=value", line_no));
    }
    apply_setting(config, trim(l.substr(0, eq)), l.substr(eq + 1));
  }
}

void apply_environment(ServiceConfig& config, const EnvLookup& lookup) {
  for (const auto& [key, _] : config_keys()) {
    if (auto v = lookup(key)) apply_setting(config, key, *v);
  }
}

ServiceConfig load_config(const std::optional<std::filesystem::path>& file) {
  ServiceConfig config;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw Error(Errc::config_error, fmt::format("cannot read {}", file->string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_config_text(config, ss.str());
  }
  apply_environment(config, [](const std::string& key) -> std::optional<std::string> {
    const char* v = std::getenv(key.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  });
  validate(config);
  return config;
}

void validate(const ServiceConfig& c) {
  if (c.detector != "mock" && c.detector != "remote") {
    throw Error(Errc::config_error, fmt::format("DETECTOR must be mock or remote, not '{}'", c.detector));
  }
  if (c.detector == "remote" && c.detector_endpoint.empty()) {
    throw Error(Errc::config_error, "DETECTOR=remote needs DETECTOR_ENDPOINT");
  }
  if (!(c.confidence_threshold >= 0.0 && c.confidence_threshold <= 1.0)) {
    throw Error(Errc::config_error, "CONFIDENCE_THRESHOLD must lie in [0,1]");
  }
  if (c.max_attachment_mb == 0) throw Error(Errc::config_error, "MAX_ATTACHMENT_MB must be positive");
  if (c.queue_capacity == 0) throw Error(Errc::config_error, "QUEUE_CAPACITY must be positive");
  if (c.ingest_workers == 0) throw Error(Errc::config_error, "INGEST_WORKERS must be positive");
  if (c.delivery_attempts < 1) throw Error(Errc::config_error, "DELIVERY_ATTEMPTS must be positive");
  if (c.smtp_tls_cert.empty() != c.smtp_tls_key.empty()) {
    throw Error(Errc::config_error, "SMTP_TLS_CERT and SMTP_TLS_KEY go together");
  }
}

}  // namespace trapwatch::service
