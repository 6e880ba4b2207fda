#pragma once

// nlohmann/json bindings for the domain types. This is the API wire format:
// snake_case keys, RFC 3339 UTC timestamps, doubles printed round-trip exact.

#include <json.hpp>

#include "trapwatch/core/alerting.hpp"
#include "trapwatch/core/catalog.hpp"
#include "trapwatch/core/types.hpp"

namespace trapwatch {

void to_json(nlohmann::json& j, const BoundingBox& b);
void from_json(const nlohmann::json& j, BoundingBox& b);

void to_json(nlohmann::json& j, const HumanVerdict& v);
void from_json(const nlohmann::json& j, HumanVerdict& v);

void to_json(nlohmann::json& j, const Detection& d);
void from_json(const nlohmann::json& j, Detection& d);

void to_json(nlohmann::json& j, const CameraSource& c);
void from_json(const nlohmann::json& j, CameraSource& c);

void to_json(nlohmann::json& j, const ImageAsset& a);
void from_json(const nlohmann::json& j, ImageAsset& a);

void to_json(nlohmann::json& j, const SpeciesEntry& e);

/// `cameras` is the string "ALL" or a list of camera ids.
void to_json(nlohmann::json& j, const AlertRule& r);
void from_json(const nlohmann::json& j, AlertRule& r);
void to_json(nlohmann::json& j, const AlertEvent& a);
void from_json(const nlohmann::json& j, AlertEvent& a);

}  // namespace trapwatch
