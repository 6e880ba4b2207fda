#include "trapwatch/core/json.hpp"

#include "trapwatch/core/error.hpp"

namespace trapwatch {
namespace {

Frame parse_frame(const std::string& s) {
  if (s == "original") return Frame::original;
  if (s == "model_input") return Frame::model_input;
  if (s == "normalized") return Frame::normalized;
  throw Error(Errc::invalid_argument, "unknown box frame '" + s + "'");
}

Timestamp parse_time_field(const nlohmann::json& j, const char* key) {
  auto t = parse_rfc3339(j.at(key).get<std::string>());
  if (!t) throw Error(Errc::invalid_argument, std::string("bad timestamp in ") + key);
  return *t;
}

}  // namespace

void to_json(nlohmann::json& j, const BoundingBox& b) {
  j = nlohmann::json{{"x_min", b.x_min},
                     {"y_min", b.y_min},
                     {"x_max", b.x_max},
                     {"y_max", b.y_max},
                     {"frame", std::string(to_string(b.frame))}};
}

void from_json(const nlohmann::json& j, BoundingBox& b) {
  b.x_min = j.at("x_min").get<double>();
  b.y_min = j.at("y_min").get<double>();
  b.x_max = j.at("x_max").get<double>();
  b.y_max = j.at("y_max").get<double>();
  b.frame = j.contains("frame") ? parse_frame(j.at("frame").get<std::string>()) : Frame::original;
}

void to_json(nlohmann::json& j, const HumanVerdict& v) {
  j = nlohmann::json::object();
  if (v.is_class()) {
    j["true_class_id"] = v.true_class_id();
    j["sentinel"] = nullptr;
  } else {
    j["true_class_id"] = nullptr;
    j["sentinel"] = std::string(to_string(std::get<VerdictSentinel>(v.truth)));
  }
  j["reviewer"] = v.reviewer;
  j["reviewed_at"] = format_rfc3339(v.reviewed_at);
}

void from_json(const nlohmann::json& j, HumanVerdict& v) {
  const bool has_class = j.contains("true_class_id") && !j.at("true_class_id").is_null();
  const bool has_sentinel = j.contains("sentinel") && !j.at("sentinel").is_null();
  if (has_class == has_sentinel) {
    throw Error(Errc::invalid_argument,
                "verdict needs exactly one of true_class_id or sentinel");
  }
  if (has_class) {
    v.truth = j.at("true_class_id").get<int>();
  } else {
    auto s = parse_sentinel(j.at("sentinel").get<std::string>());
    if (!s) throw Error(Errc::invalid_argument, "sentinel must be BLANK or NO_GOOD");
    v.truth = *s;
  }
  v.reviewer = j.value("reviewer", std::string{});
  v.reviewed_at = j.contains("reviewed_at") ? parse_time_field(j, "reviewed_at") : Timestamp{};
}

void to_json(nlohmann::json& j, const Detection& d) {
  j = nlohmann::json{{"detection_id", d.detection_id},
                     {"asset_id", d.asset_id},
                     {"box", d.box},
                     {"class_id", d.class_id},
                     {"confidence", d.confidence},
                     {"model_version", d.model_version}};
  j["verdict"] = d.verdict ? nlohmann::json(*d.verdict) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, Detection& d) {
  d.detection_id = j.at("detection_id").get<std::string>();
  d.asset_id = j.at("asset_id").get<std::string>();
  d.box = j.at("box").get<BoundingBox>();
  d.class_id = j.at("class_id").get<int>();
  d.confidence = j.at("confidence").get<double>();
  d.model_version = j.value("model_version", std::string{});
  if (j.contains("verdict") && !j.at("verdict").is_null()) {
    d.verdict = j.at("verdict").get<HumanVerdict>();
  } else {
    d.verdict.reset();
  }
}

void to_json(nlohmann::json& j, const CameraSource& c) {
  j = nlohmann::json{{"camera_id", c.camera_id},
                     {"name", c.name},
                     {"smtp_sender", c.smtp_sender},
                     {"ir_sensitivity", std::string(to_string(c.ir_sensitivity))},
                     {"active", c.active}};
  if (c.location) {
    j["location"] = {{"lat", c.location->lat}, {"lon", c.location->lon}};
  } else {
    j["location"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, CameraSource& c) {
  c.camera_id = j.at("camera_id").get<std::string>();
  c.name = j.value("name", std::string{});
  c.smtp_sender = j.value("smtp_sender", std::string{});
  c.ir_sensitivity = parse_ir_sensitivity(j.value("ir_sensitivity", std::string("medium")));
  c.active = j.value("active", true);
  if (j.contains("location") && !j.at("location").is_null()) {
    c.location = GeoPoint{j.at("location").at("lat").get<double>(),
                          j.at("location").at("lon").get<double>()};
  } else {
    c.location.reset();
  }
}

void to_json(nlohmann::json& j, const ImageAsset& a) {
  j = nlohmann::json{{"asset_id", a.asset_id},
                     {"content_hash", a.content_hash},
                     {"width", a.width},
                     {"height", a.height},
                     {"source", a.source()},
                     {"received_at", format_rfc3339(a.received_at)},
                     {"trigger_time", format_rfc3339(a.trigger_time)},
                     {"storage_key", a.storage_key}};
  j["dpi"] = a.dpi ? nlohmann::json(*a.dpi) : nlohmann::json(nullptr);
  j["camera_id"] = a.camera_id ? nlohmann::json(*a.camera_id) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, ImageAsset& a) {
  a.asset_id = j.at("asset_id").get<std::string>();
  a.content_hash = j.at("content_hash").get<std::string>();
  a.width = j.at("width").get<int>();
  a.height = j.at("height").get<int>();
  a.received_at = parse_time_field(j, "received_at");
  a.trigger_time = parse_time_field(j, "trigger_time");
  a.storage_key = j.value("storage_key", std::string{});
  if (j.contains("dpi") && !j.at("dpi").is_null()) a.dpi = j.at("dpi").get<int>();
  else a.dpi.reset();
  if (j.contains("camera_id") && !j.at("camera_id").is_null()) {
    a.camera_id = j.at("camera_id").get<std::string>();
  } else {
    a.camera_id.reset();
  }
}

void to_json(nlohmann::json& j, const SpeciesEntry& e) {
  j = nlohmann::json{{"class_id", e.class_id},
                     {"scientific_name", e.scientific_name},
                     {"common_name", e.common_name}};
}

void to_json(nlohmann::json& j, const AlertRule& r) {
  j = nlohmann::json{{"rule_id", r.rule_id},
                     {"name", r.name},
                     {"class_ids", r.class_ids},
                     {"min_confidence", r.min_confidence},
                     {"cooldown_seconds", r.cooldown_seconds},
                     {"sink", {{"kind", std::string(to_string(r.sink.kind))}, {"target", r.sink.target}}},
                     {"enabled", r.enabled}};
  j["cameras"] = r.cameras.empty() ? nlohmann::json("ALL") : nlohmann::json(r.cameras);
}

void from_json(const nlohmann::json& j, AlertRule& r) {
  r.rule_id = j.value("rule_id", std::string{});
  r.name = j.value("name", std::string{});
  r.class_ids = j.at("class_ids").get<std::set<int>>();
  r.min_confidence = j.value("min_confidence", 0.0);
  r.cooldown_seconds = j.value("cooldown_seconds", std::int64_t{0});
  r.enabled = j.value("enabled", true);
  r.cameras.clear();
  if (j.contains("cameras")) {
    const auto& c = j.at("cameras");
    if (c.is_array()) {
      r.cameras = c.get<std::vector<std::string>>();
    } else if (!(c.is_null() || (c.is_string() && c.get<std::string>() == "ALL"))) {
      throw Error(Errc::invalid_argument, "cameras must be \"ALL\" or a list of camera ids");
    }
  }
  r.sink = AlertSink{};
  if (j.contains("sink")) {
    const auto& s = j.at("sink");
    r.sink.kind = parse_sink_kind(s.at("kind").get<std::string>());
    r.sink.target = s.value("target", std::string{});
  }
}

void to_json(nlohmann::json& j, const AlertEvent& a) {
  j = nlohmann::json{{"alert_id", a.alert_id},
                     {"rule_id", a.rule_id},
                     {"detection_id", a.detection_id},
                     {"class_id", a.class_id},
                     {"event_time", format_rfc3339(a.event_time)},
                     {"fired_at", format_rfc3339(a.fired_at)},
                     {"delivery_status", std::string(to_string(a.status))},
                     {"attempts", a.attempts},
                     {"last_error", a.last_error}};
  j["camera_id"] = a.camera_id ? nlohmann::json(*a.camera_id) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, AlertEvent& a) {
  a.alert_id = j.at("alert_id").get<std::string>();
  a.rule_id = j.at("rule_id").get<std::string>();
  a.detection_id = j.at("detection_id").get<std::string>();
  a.class_id = j.at("class_id").get<int>();
  a.event_time = parse_time_field(j, "event_time");
  a.fired_at = parse_time_field(j, "fired_at");
  a.status = parse_delivery_state(j.value("delivery_status", std::string("pending")));
  a.attempts = j.value("attempts", 0);
  a.last_error = j.value("last_error", std::string{});
  if (j.contains("camera_id") && !j.at("camera_id").is_null()) {
    a.camera_id = j.at("camera_id").get<std::string>();
  } else {
    a.camera_id.reset();
  }
}

}  // namespace trapwatch
