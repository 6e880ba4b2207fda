#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "trapwatch/core/catalog.hpp"
#include "trapwatch/core/types.hpp"
#include "trapwatch/gateway/image.hpp"
#include "trapwatch/gateway/letterbox.hpp"

namespace trapwatch::gateway {

/// One output row in the model-input frame.
struct RawRow {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
  double score = 0.0;
  int class_index = 0;
  friend bool operator==(const RawRow&, const RawRow&) = default;
};

/// Fixed-capacity output; rows with score 0 are padding.
struct RawModelOutput {
  std::vector<RawRow> rows;
  friend bool operator==(const RawModelOutput&, const RawModelOutput&) = default;
};

inline constexpr std::size_t kDefaultMaxDetections = 300;
inline constexpr double kDefaultConfidenceThreshold = 0.387;

struct DetectorConfig {
  std::string model_name = "trapwatch";
  std::string model_version = "1";
  double confidence_threshold = kDefaultConfidenceThreshold;
  std::size_t max_detections = kDefaultMaxDetections;
  int target = kDefaultTarget;
  /// Class-agnostic suppression of overlapping detections; off by default.
  bool nms = false;
  double nms_iou = 0.7;
};

/// Throws Errc::config_error.
void validate(const DetectorConfig& config);

struct InferenceInput {
  const std::string& content_hash;
  const DecodedImage& image;
  const LetterboxTransform& transform;
};

/// A model backend. Implementations must tolerate concurrent calls.
class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;
  virtual RawModelOutput infer(const InferenceInput& input) = 0;
};

/// Table lookup by content hash. Misses give an empty output.
class MockBackend : public DetectorBackend {
 public:
  MockBackend() = default;
  explicit MockBackend(std::map<std::string, RawModelOutput, std::less<>> table)
      : table_(std::move(table)) {}

  /// `content_hash_hex x1 y1 x2 y2 score class_index` per line; `#` comments.
  /// Throws Errc::invalid_argument with the line number.
  static MockBackend parse(std::string_view text);
  static MockBackend load(const std::filesystem::path& path);

  RawModelOutput lookup(std::string_view content_hash) const;
  RawModelOutput infer(const InferenceInput& input) override { return lookup(input.content_hash); }
  std::size_t size() const noexcept { return table_.size(); }

 private:
  std::map<std::string, RawModelOutput, std::less<>> table_;
};

struct RemoteConfig {
  std::string endpoint;  // http://host:port
  std::string model_name = "trapwatch";
  std::size_t capacity = kDefaultMaxDetections;
  std::chrono::milliseconds timeout{10000};
  int attempts = 3;
  std::chrono::milliseconds backoff{200};
  std::ptrdiff_t max_in_flight = 4;
};

/// Request body for a CHW tensor of the given square size.
std::string build_infer_request(const std::vector<float>& tensor, int target);
/// Parses `output0`; throws Errc::shape_mismatch or Errc::backend_protocol_error.
RawModelOutput parse_infer_response(std::string_view body, std::size_t capacity);

/// Open inference protocol client over HTTP/JSON.
class RemoteBackend : public DetectorBackend {
 public:
  explicit RemoteBackend(RemoteConfig config);
  ~RemoteBackend() override;

  RawModelOutput infer(const InferenceInput& input) override;
  /// The wire call on an already-built tensor. Throws Errc::timeout,
  /// Errc::non_2xx, Errc::backend_unavailable or Errc::shape_mismatch.
  RawModelOutput remote_infer(const std::vector<float>& tensor, int target);

  const RemoteConfig& config() const noexcept { return config_; }

 private:
  RemoteConfig config_;
  std::counting_semaphore<> in_flight_;
};

/// decode -> letterbox -> backend -> threshold -> catalog check -> unletterbox.
class Detector {
 public:
  Detector(std::shared_ptr<DetectorBackend> backend, DetectorConfig config,
           const SpeciesCatalog& catalog = SpeciesCatalog::default_catalog());

  /// Throws Errc::undecodable_image, Errc::backend_unavailable,
  /// Errc::backend_protocol_error.
  std::vector<Detection> detect(const ImageAsset& asset, std::string_view image_bytes) const;
  /// Same, on an image that is already decoded.
  std::vector<Detection> detect(const ImageAsset& asset, const DecodedImage& image) const;

  const DetectorConfig& config() const noexcept { return config_; }

 private:
  std::shared_ptr<DetectorBackend> backend_;
  DetectorConfig config_;
  const SpeciesCatalog& catalog_;
};

/// Stable id for the n-th detection of an asset, so replays reproduce it.
std::string detection_id_for(std::string_view asset_id, std::size_t index);

}  // namespace trapwatch::gateway
