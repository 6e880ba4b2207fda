#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "trapwatch/core/box.hpp"
#include "trapwatch/core/time.hpp"

namespace trapwatch {

enum class IrSensitivity { low, medium, high };

std::string_view to_string(IrSensitivity s) noexcept;
IrSensitivity parse_ir_sensitivity(std::string_view text);

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct CameraSource {
  std::string camera_id;
  std::string name;
  std::optional<GeoPoint> location;
  std::string smtp_sender;
  IrSensitivity ir_sensitivity = IrSensitivity::medium;
  bool active = true;

  friend bool operator==(const CameraSource&, const CameraSource&) = default;
};

/// Where an asset came from. Batch uploads carry no camera.
inline constexpr std::string_view kBatchUploadSource = "batch-upload";

struct ImageAsset {
  std::string asset_id;
  std::string content_hash;  // 64 hex chars
  int width = 0;
  int height = 0;
  std::optional<int> dpi;
  std::optional<std::string> camera_id;  // empty for batch uploads
  Timestamp received_at{};
  Timestamp trigger_time{};
  std::string storage_key;

  std::string source() const {
    return camera_id ? *camera_id : std::string(kBatchUploadSource);
  }

  friend bool operator==(const ImageAsset&, const ImageAsset&) = default;
};

/// The asset id is derived from the content so every ingest path agrees on it.
std::string asset_id_for_hash(std::string_view content_hash);

enum class VerdictSentinel { blank, no_good };

std::string_view to_string(VerdictSentinel s) noexcept;
std::optional<VerdictSentinel> parse_sentinel(std::string_view text);

struct HumanVerdict {
  /// Either a catalog class or one of the sentinels, never both.
  std::variant<int, VerdictSentinel> truth;
  std::string reviewer;
  Timestamp reviewed_at{};

  bool is_class() const noexcept { return std::holds_alternative<int>(truth); }
  bool is(VerdictSentinel s) const noexcept {
    auto* p = std::get_if<VerdictSentinel>(&truth);
    return p != nullptr && *p == s;
  }
  int true_class_id() const { return std::get<int>(truth); }

  friend bool operator==(const HumanVerdict&, const HumanVerdict&) = default;
};

struct Detection {
  std::string detection_id;
  std::string asset_id;
  BoundingBox box;  // original-image frame
  int class_id = 0;
  double confidence = 0.0;
  std::string model_version;
  std::optional<HumanVerdict> verdict;

  friend bool operator==(const Detection&, const Detection&) = default;
};

}  // namespace trapwatch
