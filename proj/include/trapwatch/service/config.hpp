#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace trapwatch::service {

/// Deployment settings. Keys in files and the environment use the upper
/// case names listed by config_keys(), e.g. API_BIND or CONFIDENCE_THRESHOLD.
struct ServiceConfig {
  std::string api_bind = "0.0.0.0:8080";
  std::string smtp_bind = "0.0.0.0:2525";
  std::string auth_token;
  bool anonymous_read = false;
  std::string detector = "mock";
  std::string detector_endpoint;
  std::string model_name = "trapwatch";
  std::string model_version = "1";
  double confidence_threshold = 0.387;
  bool nms = false;
  std::size_t max_attachment_mb = 25;
  std::filesystem::path data_dir = "data";
  std::filesystem::path queue_dir;       // default <data_dir>/queue
  std::filesystem::path quarantine_dir;  // default <data_dir>/quarantine
  std::filesystem::path mock_table;
  std::filesystem::path catalog_file;
  std::filesystem::path static_dir;
  std::size_t queue_capacity = 1000;
  std::size_t ingest_workers = 2;
  std::size_t delivery_workers = 2;
  int delivery_attempts = 3;
  std::size_t delivery_backoff_ms = 200;
  std::size_t delivery_timeout_ms = 5000;
  std::string smtp_relay;
  std::string mail_from = "alerts@trapwatch.invalid";
  std::string public_base_url;
  std::string smtp_tls_cert;
  std::string smtp_tls_key;
  std::string smtp_users;  // user:password,user:password
  bool smtp_require_auth = false;
  bool seed_default_rule = true;
  std::string log_level = "info";

  std::filesystem::path effective_queue_dir() const {
    return queue_dir.empty() ? data_dir / "queue" : queue_dir;
  }
  std::filesystem::path effective_quarantine_dir() const {
    return quarantine_dir.empty() ? data_dir / "quarantine" : quarantine_dir;
  }
};

/// Applies one KEY=value. Throws Errc::config_error on an unknown key or a
/// value that does not parse.
void apply_setting(ServiceConfig& config, std::string_view key, std::string_view value);

/// `KEY=value` lines, `#` comments, blank lines ignored.
void apply_config_text(ServiceConfig& config, std::string_view text);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Every known key that `lookup` returns a value for overrides the config.
void apply_environment(ServiceConfig& config, const EnvLookup& lookup);

/// Defaults, then the file (if any), then the process environment.
ServiceConfig load_config(const std::optional<std::filesystem::path>& file);

/// Throws Errc::config_error on inconsistent settings.
void validate(const ServiceConfig& config);

const std::map<std::string, std::string>& config_keys();

}  // namespace trapwatch::service
