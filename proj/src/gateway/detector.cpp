#include "trapwatch/gateway/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "trapwatch/core/error.hpp"
#include "trapwatch/core/hash.hpp"

namespace trapwatch::gateway {
namespace {

double box_iou(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  return inter / (a.area() + b.area() - inter);
}

std::vector<Detection> suppress(std::vector<Detection> dets, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });
  std::vector<bool> dropped(dets.size(), false);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (dropped[order[i]]) continue;
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (!dropped[order[j]] && box_iou(dets[order[i]].box, dets[order[j]].box) > iou_threshold) {
        dropped[order[j]] = true;
      }
    }
  }
  std::vector<Detection> out;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (!dropped[i]) out.push_back(std::move(dets[i]));
  }
  return out;
}

// Splits "http://host:port/prefix" into the scheme+authority httplib wants
// and a path prefix.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  auto scheme = endpoint.find("://");
  auto path_at = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_at == std::string::npos) return {endpoint, ""};
  std::string prefix = endpoint.substr(path_at);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {endpoint.substr(0, path_at), prefix};
}

}  // namespace

void validate(const DetectorConfig& config) {
  if (!(config.confidence_threshold >= 0.0 && config.confidence_threshold <= 1.0)) {
    throw Error(Errc::config_error, "confidence threshold must lie in [0,1]");
  }
  if (config.max_detections == 0) throw Error(Errc::config_error, "max_detections must be positive");
  if (config.target < 1) throw Error(Errc::config_error, "model input size must be positive");
  if (!(config.nms_iou > 0.0 && config.nms_iou <= 1.0)) {
    throw Error(Errc::config_error, "nms_iou must lie in (0,1]");
  }
}

MockBackend MockBackend::parse(std::string_view text) {
  std::map<std::string, RawModelOutput, std::less<>> table;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash_at = line.find('#');
    if (hash_at != std::string::npos) line.erase(hash_at);
    std::istringstream fields(line);
    std::string hash;
    if (!(fields >> hash)) continue;
    RawRow row;
    std::string extra;
    if (!(fields >> row.x1 >> row.y1 >> row.x2 >> row.y2 >> row.score >> row.class_index) ||
        (fields >> extra)) {
      throw Error(Errc::invalid_argument,
                  fmt::format("mock table line {}: expected hash x1 y1 x2 y2 score class", line_no));
    }
    std::string raw;
    if (hash.size() != 64 || !hex_decode(hash, raw)) {
      throw Error(Errc::invalid_argument,
                  fmt::format("mock table line {}: '{}' is not a SHA-256 hex digest", line_no, hash));
    }
    std::transform(hash.begin(), hash.end(), hash.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    table[hash].rows.push_back(row);
  }
  return MockBackend(std::move(table));
}

MockBackend MockBackend::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, fmt::format("cannot read mock table {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

RawModelOutput MockBackend::lookup(std::string_view content_hash) const {
  auto it = table_.find(content_hash);
  return it == table_.end() ? RawModelOutput{} : it->second;
}

std::string build_infer_request(const std::vector<float>& tensor, int target) {
  const auto expected = 3u * static_cast<std::size_t>(target) * static_cast<std::size_t>(target);
  if (tensor.size() != expected) {
    throw Error(Errc::invalid_argument,
                fmt::format("tensor has {} values, expected {}", tensor.size(), expected));
  }
  fmt::memory_buffer buf;
  buf.reserve(tensor.size() * 8 + 128);
  fmt::format_to(std::back_inserter(buf),
                 R"({{"inputs":[{{"name":"images","shape":[1,3,{},{}],"datatype":"FP32","data":[)",
                 target, target);
  for (std::size_t i = 0; i < tensor.size(); ++i) {
    if (i) buf.push_back(',');
    fmt::format_to(std::back_inserter(buf), "{}", tensor[i]);
  }
  fmt::format_to(std::back_inserter(buf), "]}}]}}");
  return fmt::to_string(buf);
}

RawModelOutput parse_infer_response(std::string_view body, std::size_t capacity) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::backend_protocol_error, fmt::format("response is not JSON: {}", e.what()));
  }
  const nlohmann::json* output = nullptr;
  if (doc.contains("outputs") && doc["outputs"].is_array()) {
    for (const auto& o : doc["outputs"]) {
      if (o.value("name", "") == "output0") output = &o;
    }
  }
  if (!output) throw Error(Errc::backend_protocol_error, "response has no output0");
  const auto& shape = output->value("shape", nlohmann::json::array());
  const nlohmann::json want = {1, capacity, 6};
  if (shape != want) {
    throw Error(Errc::shape_mismatch,
                fmt::format("output0 shape {} but expected {}", shape.dump(), want.dump()));
  }
  const auto& data = output->value("data", nlohmann::json::array());
  if (!data.is_array() || data.size() != capacity * 6) {
    throw Error(Errc::backend_protocol_error,
                fmt::format("output0 carries {} values, expected {}", data.size(), capacity * 6));
  }
  RawModelOutput out;
  out.rows.reserve(capacity);
  try {
    for (std::size_t r = 0; r < capacity; ++r) {
      RawRow row;
      row.x1 = data[r * 6].get<double>();
      row.y1 = data[r * 6 + 1].get<double>();
      row.x2 = data[r * 6 + 2].get<double>();
      row.y2 = data[r * 6 + 3].get<double>();
      row.score = data[r * 6 + 4].get<double>();
      const double cls = data[r * 6 + 5].get<double>();
      if (cls != std::floor(cls)) {
        throw Error(Errc::backend_protocol_error,
                    fmt::format("row {} has a fractional class index {}", r, cls));
      }
      row.class_index = static_cast<int>(cls);
      out.rows.push_back(row);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::backend_protocol_error, fmt::format("output0 data: {}", e.what()));
  }
  return out;
}

RemoteBackend::RemoteBackend(RemoteConfig config)
    : config_(std::move(config)), in_flight_(std::max<std::ptrdiff_t>(1, config_.max_in_flight)) {
  if (config_.endpoint.empty()) throw Error(Errc::config_error, "remote detector needs an endpoint");
  if (config_.attempts < 1) throw Error(Errc::config_error, "remote detector needs >= 1 attempt");
}

RemoteBackend::~RemoteBackend() = default;

RawModelOutput RemoteBackend::infer(const InferenceInput& input) {
  return remote_infer(input.image.to_tensor(input.transform), input.transform.target);
}

RawModelOutput RemoteBackend::remote_infer(const std::vector<float>& tensor, int target) {
  const std::string body = build_infer_request(tensor, target);
  const auto [base, prefix] = split_endpoint(config_.endpoint);
  const std::string path = fmt::format("{}/v2/models/{}/infer", prefix, config_.model_name);

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  Error last(Errc::backend_unavailable, "no attempt made");
  auto delay = config_.backoff;
  for (int attempt = 1; attempt <= config_.attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    httplib::Client client(base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    auto res = client.Post(path, body, "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::Read || err == httplib::Error::Write) {
        last = Error(Errc::timeout, fmt::format("inference request to {}: {}", base,
                                                httplib::to_string(err)));
      } else {
        last = Error(Errc::backend_unavailable, fmt::format("inference server {} unreachable: {}",
                                                            base, httplib::to_string(err)));
      }
      spdlog::warn("remote infer attempt {}/{} failed: {}", attempt, config_.attempts, last.what());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last = Error(Errc::non_2xx, fmt::format("inference server answered HTTP {}", res->status));
      if (res->status < 500) throw last;
      spdlog::warn("remote infer attempt {}/{} failed: {}", attempt, config_.attempts, last.what());
      continue;
    }
    return parse_infer_response(res->body, config_.capacity);
  }
  throw last;
}

Detector::Detector(std::shared_ptr<DetectorBackend> backend, DetectorConfig config,
                   const SpeciesCatalog& catalog)
    : backend_(std::move(backend)), config_(std::move(config)), catalog_(catalog) {
  if (!backend_) throw Error(Errc::config_error, "detector needs a backend");
  validate(config_);
}

std::vector<Detection> Detector::detect(const ImageAsset& asset, std::string_view image_bytes) const {
  return detect(asset, decode_image(image_bytes));
}

std::vector<Detection> Detector::detect(const ImageAsset& asset, const DecodedImage& image) const {
  const auto transform = letterbox(image.width(), image.height(), config_.target);
  const auto raw = backend_->infer(InferenceInput{asset.content_hash, image, transform});
  std::vector<Detection> out;
  for (const auto& row : raw.rows) {
    if (!(row.score >= 0.0 && row.score <= 1.0)) {
      throw Error(Errc::backend_protocol_error, fmt::format("score {} outside [0,1]", row.score));
    }
    if (row.score == 0.0) continue;  // padding
    if (!catalog_.contains(row.class_index)) {
      throw Error(Errc::backend_protocol_error,
                  fmt::format("class index {} is not in the catalog", row.class_index));
    }
    if (row.score < config_.confidence_threshold) continue;
    BoundingBox model_box{row.x1, row.y1, row.x2, row.y2, Frame::model_input};
    Detection d;
    try {
      d.box = unletterbox_box(model_box, transform, image.width(), image.height());
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate_box) throw;
      spdlog::debug("dropping detection outside the image on {}", asset.asset_id);
      continue;
    }
    d.asset_id = asset.asset_id;
    d.class_id = row.class_index;
    d.confidence = row.score;
    d.model_version = config_.model_version;
    out.push_back(std::move(d));
  }
  if (config_.nms) out = suppress(std::move(out), config_.nms_iou);
  if (out.size() > config_.max_detections) out.resize(config_.max_detections);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].detection_id = detection_id_for(asset.asset_id, i);
  return out;
}

std::string detection_id_for(std::string_view asset_id, std::size_t index) {
  return sha256_hex(fmt::format("{}:{}", asset_id, index)).substr(0, 32);
}

}  // namespace trapwatch::gateway
