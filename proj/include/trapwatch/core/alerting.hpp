#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "trapwatch/core/time.hpp"

namespace trapwatch {

enum class SinkKind { webhook, email, log };
std::string_view to_string(SinkKind k) noexcept;
SinkKind parse_sink_kind(std::string_view text);

struct AlertSink {
  SinkKind kind = SinkKind::log;
  std::string target;  // URL, mail address, or empty for log
  friend bool operator==(const AlertSink&, const AlertSink&) = default;
};

struct AlertRule {
  std::string rule_id;
  std::string name;
  std::set<int> class_ids;
  double min_confidence = 0.0;
  std::vector<std::string> cameras;  // empty means every camera
  std::int64_t cooldown_seconds = 0;
  AlertSink sink;
  bool enabled = true;

  bool applies_to_camera(const std::optional<std::string>& camera_id) const;
  friend bool operator==(const AlertRule&, const AlertRule&) = default;
};

/// Throws Errc::invalid_argument naming the offending field.
void validate(const AlertRule& rule);

enum class DeliveryState { pending, delivered, failed };
std::string_view to_string(DeliveryState s) noexcept;
DeliveryState parse_delivery_state(std::string_view text);

struct AlertEvent {
  std::string alert_id;
  std::string rule_id;
  std::string detection_id;
  std::optional<std::string> camera_id;
  int class_id = 0;
  /// Trigger time of the image; cooldowns are measured on this clock.
  Timestamp event_time{};
  Timestamp fired_at{};
  DeliveryState status = DeliveryState::pending;
  int attempts = 0;
  std::string last_error;
  friend bool operator==(const AlertEvent&, const AlertEvent&) = default;
};

std::string alert_id_for(std::string_view rule_id, std::string_view detection_id);

}  // namespace trapwatch
