#include "trapwatch/alert/engine.hpp"

#include <algorithm>
#include <cstdlib>

#include "trapwatch/core/json.hpp"

namespace trapwatch::alert {
namespace {

bool in_cooldown(const AlertRule& rule, const Detection& d, const DetectionContext& ctx,
                 std::span<const AlertEvent> recent) {
  if (rule.cooldown_seconds <= 0) return false;
  const auto window = rule.cooldown_seconds * 1000;
  const auto t = to_millis(ctx.event_time);
  return std::any_of(recent.begin(), recent.end(), [&](const AlertEvent& a) {
    return a.rule_id == rule.rule_id && a.camera_id == ctx.camera_id && a.class_id == d.class_id &&
           std::llabs(to_millis(a.event_time) - t) < window;
  });
}

}  // namespace

std::vector<AlertEvent> evaluate(const Detection& detection, const DetectionContext& ctx,
                                 std::span<const AlertRule> rules,
                                 std::span<const AlertEvent> recent, Timestamp fired_at) {
  std::vector<AlertEvent> out;
  for (const auto& rule : rules) {
    if (!rule.enabled || !rule.class_ids.count(detection.class_id)) continue;
    if (detection.confidence < rule.min_confidence) continue;
    if (!rule.applies_to_camera(ctx.camera_id)) continue;
    if (in_cooldown(rule, detection, ctx, recent)) continue;
    AlertEvent a;
    a.alert_id = alert_id_for(rule.rule_id, detection.detection_id);
    a.rule_id = rule.rule_id;
    a.detection_id = detection.detection_id;
    a.camera_id = ctx.camera_id;
    a.class_id = detection.class_id;
    a.event_time = ctx.event_time;
    a.fired_at = fired_at;
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<AlertEvent> evaluate_asset(const store::AlertContext& ctx, Timestamp fired_at) {
  std::vector<AlertEvent> recent = ctx.recent;
  std::vector<AlertEvent> out;
  const DetectionContext dctx{ctx.asset.camera_id, ctx.asset.trigger_time};
  for (const auto& d : ctx.detections) {
    for (auto& a : evaluate(d, dctx, ctx.rules, recent, fired_at)) {
      recent.push_back(a);
      out.push_back(std::move(a));
    }
  }
  return out;
}

std::int64_t max_cooldown_seconds(std::span<const AlertRule> rules) {
  std::int64_t out = 0;
  for (const auto& r : rules) {
    if (r.enabled) out = std::max(out, r.cooldown_seconds);
  }
  return out;
}

AlertRule default_rule() {
  AlertRule r;
  r.rule_id = "curlew";
  r.name = "Curlew adults and chicks";
  r.class_ids = {22, 23};
  r.min_confidence = 0.5;
  r.cooldown_seconds = 300;
  r.sink = AlertSink{SinkKind::log, ""};
  return r;
}

nlohmann::json alert_payload(const AlertEvent& alert, const Detection& detection,
                             const std::optional<CameraSource>& camera,
                             const SpeciesCatalog& catalog, const std::string& image_url) {
  nlohmann::json cam;
  if (camera) {
    cam = {{"id", camera->camera_id}, {"name", camera->name}};
    cam["location"] = camera->location
                          ? nlohmann::json{{"lat", camera->location->lat}, {"lon", camera->location->lon}}
                          : nlohmann::json(nullptr);
  } else {
    cam = {{"id", alert.camera_id ? nlohmann::json(*alert.camera_id) : nlohmann::json(nullptr)},
           {"name", nullptr},
           {"location", nullptr}};
  }
  const std::string cls = catalog.contains(detection.class_id)
                              ? catalog.at(detection.class_id).scientific_name
                              : std::to_string(detection.class_id);
  return nlohmann::json{{"alert_id", alert.alert_id},
                        {"rule_id", alert.rule_id},
                        {"camera", std::move(cam)},
                        {"detection",
                         {{"detection_id", detection.detection_id},
                          {"class", cls},
                          {"class_id", detection.class_id},
                          {"confidence", detection.confidence},
                          {"box", detection.box}}},
                        {"image_url", image_url},
                        {"fired_at", format_rfc3339(alert.fired_at)}};
}

}  // namespace trapwatch::alert
