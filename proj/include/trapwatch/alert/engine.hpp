#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trapwatch/core/alerting.hpp"
#include "trapwatch/core/catalog.hpp"
#include "trapwatch/core/types.hpp"
#include "trapwatch/store/store.hpp"

namespace trapwatch::alert {

/// Where and when a detection happened, for rule matching and cooldowns.
struct DetectionContext {
  std::optional<std::string> camera_id;
  Timestamp event_time{};
};

/// Rules that fire for one detection. A rule fires when it is enabled, the
/// class is listed, confidence >= min_confidence, the camera matches, and
/// no alert for the same (rule, camera, class) lies within the cooldown of
/// `ctx.event_time` in either direction. Pure and deterministic.
std::vector<AlertEvent> evaluate(const Detection& detection, const DetectionContext& ctx,
                                 std::span<const AlertRule> rules,
                                 std::span<const AlertEvent> recent, Timestamp fired_at);

/// All detections of one asset in order; alerts fired for earlier
/// detections count towards the cooldown of later ones.
std::vector<AlertEvent> evaluate_asset(const store::AlertContext& ctx, Timestamp fired_at);

/// Longest cooldown over the enabled rules, in seconds.
std::int64_t max_cooldown_seconds(std::span<const AlertRule> rules);

/// The rule shipped with a fresh store: curlew adults and chicks, logged.
AlertRule default_rule();

/// Webhook body: alert_id, rule_id, camera {id,name,location},
/// detection {class, confidence, box}, image_url, fired_at.
nlohmann::json alert_payload(const AlertEvent& alert, const Detection& detection,
                             const std::optional<CameraSource>& camera,
                             const SpeciesCatalog& catalog, const std::string& image_url);

}  // namespace trapwatch::alert
