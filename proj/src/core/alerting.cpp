#include "trapwatch/core/alerting.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "trapwatch/core/error.hpp"

namespace trapwatch {

std::string_view to_string(SinkKind k) noexcept {
  switch (k) {
    case SinkKind::webhook: return "webhook";
    case SinkKind::email: return "email";
    case SinkKind::log: return "log";
  }
  return "log";
}

SinkKind parse_sink_kind(std::string_view text) {
  if (text == "webhook") return SinkKind::webhook;
  if (text == "email") return SinkKind::email;
  if (text == "log") return SinkKind::log;
  throw Error(Errc::invalid_argument, fmt::format("unknown sink kind '{}'", text));
}

bool AlertRule::applies_to_camera(const std::optional<std::string>& camera_id) const {
  if (cameras.empty()) return true;
  return camera_id && std::find(cameras.begin(), cameras.end(), *camera_id) != cameras.end();
}

void validate(const AlertRule& rule) {
  if (rule.rule_id.empty()) throw Error(Errc::invalid_argument, "rule_id must not be empty");
  if (rule.class_ids.empty()) throw Error(Errc::invalid_argument, "class_ids must not be empty");
  if (!(rule.min_confidence >= 0.0 && rule.min_confidence <= 1.0)) {
    throw Error(Errc::invalid_argument, "min_confidence must lie in [0,1]");
  }
  if (rule.cooldown_seconds < 0) {
    throw Error(Errc::invalid_argument, "cooldown_seconds must be >= 0");
  }
  if (rule.sink.kind != SinkKind::log && rule.sink.target.empty()) {
    throw Error(Errc::invalid_argument, fmt::format("{} sink needs a target", to_string(rule.sink.kind)));
  }
  if (rule.sink.kind == SinkKind::webhook && rule.sink.target.rfind("http://", 0) != 0 &&
      rule.sink.target.rfind("https://", 0) != 0) {
    throw Error(Errc::invalid_argument, "webhook target must be an http(s) URL");
  }
  if (rule.sink.kind == SinkKind::email && rule.sink.target.find('@') == std::string::npos) {
    throw Error(Errc::invalid_argument, "email target must be an address");
  }
}

std::string_view to_string(DeliveryState s) noexcept {
  switch (s) {
    case DeliveryState::pending: return "pending";
    case DeliveryState::delivered: return "delivered";
    case DeliveryState::failed: return "failed";
  }
  return "pending";
}

DeliveryState parse_delivery_state(std::string_view text) {
  if (text == "pending") return DeliveryState::pending;
  if (text == "delivered") return DeliveryState::delivered;
  if (text == "failed") return DeliveryState::failed;
  throw Error(Errc::invalid_argument, fmt::format("unknown delivery state '{}'", text));
}

std::string alert_id_for(std::string_view rule_id, std::string_view detection_id) {
  return fmt::format("{}:{}", rule_id, detection_id);
}

}  // namespace trapwatch
