#include "trapwatch/service/api.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "trapwatch/core/hash.hpp"
#include "trapwatch/core/json.hpp"
#include "trapwatch/eval/report.hpp"
#include "trapwatch/gateway/image.hpp"

namespace trapwatch::service {

using nlohmann::json;

nlohmann::json to_json(const ApiError& e) {
  return json{{"http_status", e.http_status},
              {"code", e.code},
              {"message", e.message},
              {"request_id", e.request_id}};
}

int http_status_for(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument:
    case Errc::unknown_class:
    case Errc::degenerate_box:
    case Errc::frame_mismatch:
    case Errc::invalid_label:
    case Errc::invalid_override:
    case Errc::undecodable_image:
    case Errc::unverified_detections:
    case Errc::empty_input:
    case Errc::empty_dataset:
      return 422;
    case Errc::bad_cursor:
    case Errc::malformed_xml:
    case Errc::missing_size:
    case Errc::missing_box:
    case Errc::excluded_document:
      return 400;
    case Errc::not_found:
    case Errc::unknown_detection:
    case Errc::unknown_sender:
      return 404;
    case Errc::duplicate_asset:
    case Errc::integrity_violation:
      return 409;
    case Errc::oversize_attachment:
      return 413;
    case Errc::non_2xx:
    case Errc::backend_protocol_error:
    case Errc::shape_mismatch:
      return 502;
    case Errc::backend_unavailable:
    case Errc::queue_full:
    case Errc::sink_unreachable:
      return 503;
    case Errc::timeout:
      return 504;
    case Errc::no_attachment:
      return 400;
    case Errc::io_error:
    case Errc::config_error:
      return 500;
  }
  return 500;
}

const std::vector<RouteInfo>& api_routes() {
  static const std::vector<RouteInfo> routes{
      {"GET", "/api/health", "Liveness and store counts"},
      {"GET", "/api/spec", "This description"},
      {"GET", "/api/catalog", "Species catalog in class-id order"},
      {"POST", "/api/images", "Batch upload (multipart); per-file results"},
      {"GET", "/api/assets", "Stored assets, newest first"},
      {"GET", "/api/assets/{id}", "One asset with its detections"},
      {"GET", "/api/assets/{id}/image", "Original image bytes"},
      {"GET", "/api/detections", "Detections filtered by camera, class, time, confidence, verified"},
      {"GET", "/api/detections/{id}", "One detection"},
      {"POST", "/api/detections/{id}/verify", "Record a verdict {true_class_id} or {sentinel}"},
      {"GET", "/api/detections/{id}/verdicts", "Verdict history, oldest first"},
      {"GET", "/api/cameras", "Registered cameras"},
      {"POST", "/api/cameras", "Register a camera"},
      {"GET", "/api/cameras/{id}", "One camera"},
      {"PUT", "/api/cameras/{id}", "Replace a camera"},
      {"DELETE", "/api/cameras/{id}", "Remove a camera without assets"},
      {"GET", "/api/alert-rules", "Alert rules"},
      {"POST", "/api/alert-rules", "Create a rule"},
      {"GET", "/api/alert-rules/{id}", "One rule"},
      {"PUT", "/api/alert-rules/{id}", "Replace a rule"},
      {"DELETE", "/api/alert-rules/{id}", "Remove a rule and its alerts"},
      {"GET", "/api/alerts", "Fired alerts, newest first"},
      {"GET", "/api/alerts/{id}", "One alert"},
      {"POST", "/api/alerts/{id}/replay", "Queue the alert for delivery again"},
      {"GET", "/api/reports/metrics", "Per-class metrics over verified detections"},
      {"GET", "/api/reports/confusion", "Confusion matrix over verified detections"},
      {"GET", "/api/reports/blanks", "Share of assets without detections"},
      {"GET", "/api/quarantine", "Quarantined messages and images"},
      {"GET", "/api/queue", "Ingest spool depth"},
  };
  return routes;
}

nlohmann::json api_description() {
  json paths = json::object();
  for (const auto& r : api_routes()) {
    std::string method = r.method;
    for (auto& ch : method) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    json op{{"summary", r.summary}};
    json params = json::array();
    static const std::regex param_re(R"(\{([a-z_]+)\})");
    for (std::sregex_iterator it(r.path.begin(), r.path.end(), param_re), end; it != end; ++it) {
      params.push_back({{"name", (*it)[1].str()}, {"in", "path"}, {"required", true}});
    }
    if (!params.empty()) op["parameters"] = std::move(params);
    paths[r.path][method] = std::move(op);
  }
  return json{{"openapi", "3.0.3"},
              {"info", {{"title", "trapwatch"}, {"version", "1"}}},
              {"components",
               {{"schemas",
                 {{"ApiError",
                   {{"type", "object"},
                    {"required", {"http_status", "code", "message", "request_id"}}}}}}}},
              {"paths", std::move(paths)}};
}

namespace {

/// Failure with an explicit status, for conditions that have no Errc.
struct HttpFailure {
  int status;
  std::string code;
  std::string message;
};

[[noreturn]] void fail(int status, std::string code, std::string message) {
  throw HttpFailure{status, std::move(code), std::move(message)};
}

std::optional<std::string> param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  return req.get_param_value(name);
}

template <typename T>
std::optional<T> number_param(const httplib::Request& req, const char* name) {
  auto text = param(req, name);
  if (!text) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t used = 0;
      T v = static_cast<T>(std::stod(*text, &used));
      if (used == text->size()) return v;
    } catch (const std::logic_error&) {
    }
  } else {
    T v{};
    auto [p, ec] = std::from_chars(text->data(), text->data() + text->size(), v);
    if (ec == std::errc{} && p == text->data() + text->size()) return v;
  }
  fail(400, "bad_request", fmt::format("query parameter {} is not a number", name));
}

std::size_t page_limit(const httplib::Request& req) {
  auto limit = number_param<long long>(req, "limit").value_or(50);
  if (limit < 1) fail(400, "bad_request", "limit must be positive");
  return static_cast<std::size_t>(std::min<long long>(limit, store::kMaxPageSize));
}

std::optional<bool> bool_param(const httplib::Request& req, const char* name) {
  auto text = param(req, name);
  if (!text) return std::nullopt;
  if (*text == "true" || *text == "1") return true;
  if (*text == "false" || *text == "0") return false;
  fail(400, "bad_request", fmt::format("query parameter {} must be true or false", name));
}

std::optional<Timestamp> time_param(const httplib::Request& req, const char* name, int status) {
  auto text = param(req, name);
  if (!text || text->empty()) return std::nullopt;
  auto t = parse_rfc3339(*text);
  if (!t) fail(status, "bad_range", fmt::format("{} is not an RFC 3339 timestamp", name));
  return t;
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    fail(400, "bad_request", fmt::format("body is not valid JSON: {}", e.what()));
  }
}

template <typename T>
T decode_body(const json& body) {
  try {
    return body.get<T>();
  } catch (const json::exception& e) {
    fail(422, "invalid_argument", e.what());
  }
}

template <typename T>
json page_json(const store::Page<T>& page) {
  json items = json::array();
  for (const auto& item : page.items) items.push_back(item);
  return json{{"items", std::move(items)},
              {"next_cursor", page.next_cursor ? json(*page.next_cursor) : json(nullptr)}};
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::string route_pattern(const std::string& path) {
  static const std::regex param_re(R"(\{[a-z_]+\})");
  return std::regex_replace(path, param_re, "([^/]+)");
}

bool constant_time_equal(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  unsigned char diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff |= static_cast<unsigned char>(a[i] ^ b[i]);
  return diff == 0;
}

}  // namespace

struct ApiServer::Impl {
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit Impl(ApiDependencies d) : deps(d) {}

  ApiDependencies deps;
  httplib::Server server;
  std::thread thread;
  std::uint16_t port = 0;

  std::string image_url(std::string_view asset_id) const {
    return fmt::format("/api/assets/{}/image", asset_id);
  }

  json detection_view(const Detection& d) const {
    json j = d;
    j["class_name"] = deps.catalog.contains(d.class_id)
                          ? json(deps.catalog.at(d.class_id).scientific_name)
                          : json(nullptr);
    j["image_url"] = image_url(d.asset_id);
    if (auto asset = deps.store.get_asset(d.asset_id)) {
      j["camera_id"] = asset->camera_id ? json(*asset->camera_id) : json(nullptr);
      j["received_at"] = format_rfc3339(asset->received_at);
      j["trigger_time"] = format_rfc3339(asset->trigger_time);
      j["image_width"] = asset->width;
      j["image_height"] = asset->height;
    }
    return j;
  }

  json asset_view(const ImageAsset& a) const {
    json j = a;
    j["image_url"] = image_url(a.asset_id);
    return j;
  }

  bool authorized(const httplib::Request& req) const {
    const auto& token = deps.config.auth_token;
    if (token.empty()) return true;
    if (req.path == "/api/health" || req.path == "/api/spec") return true;
    if (deps.config.anonymous_read && (req.method == "GET" || req.method == "HEAD")) return true;
    const auto header = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (header.size() <= prefix.size() || header.compare(0, prefix.size(), prefix) != 0) {
      return false;
    }
    return constant_time_equal(std::string_view(header).substr(prefix.size()), token);
  }

  void error_response(httplib::Response& res, int status, std::string code, std::string message,
                      const std::string& request_id) {
    ApiError e{status, std::move(code), std::move(message), request_id};
    send_json(res, status, to_json(e));
  }

  Handler wrap(Handler inner) {
    return [this, inner = std::move(inner)](const httplib::Request& req, httplib::Response& res) {
      const auto request_id = random_id();
      res.set_header("X-Request-Id", request_id);
      if (!authorized(req)) {
        res.set_header("WWW-Authenticate", "Bearer");
        error_response(res, 401, "unauthorized", "missing or wrong bearer token", request_id);
        return;
      }
      try {
        inner(req, res);
      } catch (const HttpFailure& f) {
        error_response(res, f.status, f.code, f.message, request_id);
      } catch (const Error& e) {
        error_response(res, http_status_for(e.code()), std::string(to_string(e.code())),
                       e.what(), request_id);
      } catch (const json::exception& e) {
        error_response(res, 422, "invalid_argument", e.what(), request_id);
      } catch (const std::exception& e) {
        spdlog::error("{} {}: {}", req.method, req.path, e.what());
        error_response(res, 500, "internal", e.what(), request_id);
      }
    };
  }

  std::map<std::string, Handler> handlers();
  void install();

  // Handlers.
  void upload(const httplib::Request& req, httplib::Response& res);
  void list_detections(const httplib::Request& req, httplib::Response& res);
  void verify(const httplib::Request& req, httplib::Response& res);
  void report_metrics(const httplib::Request& req, httplib::Response& res);
  void report_confusion(const httplib::Request& req, httplib::Response& res);
  void report_blanks(const httplib::Request& req, httplib::Response& res);

  struct Range {
    std::optional<Timestamp> from;
    std::optional<Timestamp> to;
    json echo() const {
      return json{{"from", from ? json(format_rfc3339(*from)) : json(nullptr)},
                  {"to", to ? json(format_rfc3339(*to)) : json(nullptr)}};
    }
  };

  static Range range(const httplib::Request& req) {
    Range r{time_param(req, "from", 422), time_param(req, "to", 422)};
    if (r.from && r.to && *r.from > *r.to) fail(422, "bad_range", "from is after to");
    return r;
  }

  struct Split {
    std::vector<Detection> verified;
    std::size_t unverified = 0;
  };

  Split verified_in(const Range& r) const {
    Split s;
    for (auto& d : deps.store.detections_in_range(r.from, r.to)) {
      if (d.verdict) {
        s.verified.push_back(std::move(d));
      } else {
        ++s.unverified;
      }
    }
    return s;
  }
};

void ApiServer::Impl::upload(const httplib::Request& req, httplib::Response& res) {
  const std::size_t cap = deps.config.max_attachment_mb * 1024u * 1024u;
  if (!req.is_multipart_form_data()) {
    fail(400, "bad_request", "expected multipart/form-data");
  }
  std::optional<std::string> camera_id;
  std::vector<const httplib::MultipartFormData*> files;
  for (const auto& [name, part] : req.files) {
    if (!part.filename.empty()) {
      files.push_back(&part);
    } else if (name == "camera_id" && !part.content.empty()) {
      camera_id = part.content;
    }
  }
  if (files.empty()) fail(400, "no_files", "no file parts in the upload");
  for (const auto* f : files) {
    if (f->content.size() > cap) {
      fail(413, std::string(to_string(Errc::oversize_attachment)),
           fmt::format("{} is {} bytes; the limit is {}", f->filename, f->content.size(), cap));
    }
  }
  if (camera_id && !deps.store.get_camera(*camera_id)) {
    fail(422, "unknown_camera", fmt::format("camera {} is not registered", *camera_id));
  }

  const auto now = now_utc();
  json results = json::array();
  for (const auto* f : files) {
    json entry{{"filename", f->filename}};
    try {
      ProcessRequest pr;
      pr.bytes = f->content;
      pr.camera_id = camera_id;
      pr.received_at = now;
      auto r = deps.pipeline.process(pr);
      entry["asset_id"] = r.asset.asset_id;
      entry["duplicate"] = r.duplicate;
      json dets = json::array();
      for (const auto& d : r.detections) dets.push_back(detection_view(d));
      entry["detections"] = std::move(dets);
      entry["alerts"] = r.alerts.size();
    } catch (const Error& e) {
      entry["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
    }
    results.push_back(std::move(entry));
  }
  send_json(res, 200, json{{"results", std::move(results)}});
}

void ApiServer::Impl::list_detections(const httplib::Request& req, httplib::Response& res) {
  store::DetectionFilter f;
  f.camera_id = param(req, "camera_id");
  f.class_id = number_param<int>(req, "class_id");
  f.from = time_param(req, "from", 400);
  f.to = time_param(req, "to", 400);
  f.min_confidence = number_param<double>(req, "min_confidence");
  f.verified = bool_param(req, "verified");
  f.limit = page_limit(req);
  f.cursor = param(req, "cursor");
  auto page = deps.store.query_detections(f);
  json items = json::array();
  for (const auto& d : page.items) items.push_back(detection_view(d));
  send_json(res, 200,
            json{{"items", std::move(items)},
                 {"next_cursor", page.next_cursor ? json(*page.next_cursor) : json(nullptr)}});
}

void ApiServer::Impl::verify(const httplib::Request& req, httplib::Response& res) {
  const std::string id = req.matches[1];
  const json body = parse_body(req);
  if (!body.is_object()) fail(422, "invalid_argument", "body must be an object");
  HumanVerdict v;
  const bool has_class = body.contains("true_class_id") && !body["true_class_id"].is_null();
  const bool has_sentinel = body.contains("sentinel") && !body["sentinel"].is_null();
  if (has_class == has_sentinel) {
    fail(422, "invalid_argument", "give exactly one of true_class_id or sentinel");
  }
  if (has_class) {
    if (!body["true_class_id"].is_number_integer()) {
      fail(422, "invalid_argument", "true_class_id must be an integer");
    }
    const int c = body["true_class_id"].get<int>();
    if (!deps.catalog.contains(c)) {
      fail(422, std::string(to_string(Errc::unknown_class)),
           fmt::format("class {} is not in the catalog", c));
    }
    v.truth = c;
  } else {
    auto s = body["sentinel"].is_string() ? parse_sentinel(body["sentinel"].get<std::string>())
                                          : std::nullopt;
    if (!s) fail(422, "invalid_argument", "sentinel must be BLANK or NO_GOOD");
    v.truth = *s;
  }
  if (body.contains("reviewer") && body["reviewer"].is_string()) {
    v.reviewer = body["reviewer"].get<std::string>();
  } else if (req.has_header("X-Reviewer")) {
    v.reviewer = req.get_header_value("X-Reviewer");
  } else {
    v.reviewer = "api";
  }
  v.reviewed_at = now_utc();
  auto d = deps.store.record_verdict(id, v);
  send_json(res, 200, detection_view(d));
}

void ApiServer::Impl::report_metrics(const httplib::Request& req, httplib::Response& res) {
  const auto r = range(req);
  auto policy = eval::AveragePolicy::skip_undefined;
  if (auto p = param(req, "policy")) {
    if (*p == "undefined-as-zero") {
      policy = eval::AveragePolicy::undefined_as_zero;
    } else if (*p != "skip-undefined") {
      fail(400, "bad_request", "policy must be skip-undefined or undefined-as-zero");
    }
  }
  const auto split = verified_in(r);
  json out = r.echo();
  if (split.verified.empty()) {
    out["classes"] = json::array();
    out["evaluated"] = 0;
    out["excluded_no_good"] = 0;
    out["macro"] = nullptr;
  } else {
    auto report = eval::deployment_report(split.verified);
    out.update(eval::metrics_json(report, deps.catalog));
    out["macro"] = eval::macro_json(eval::macro_average(report.per_class, policy));
  }
  out["unverified"] = split.unverified;
  send_json(res, 200, out);
}

void ApiServer::Impl::report_confusion(const httplib::Request& req, httplib::Response& res) {
  const auto r = range(req);
  const auto split = verified_in(r);
  json out = r.echo();
  if (split.verified.empty()) {
    out.update(json{{"classes", json::array()},
                    {"matrix", json::array()},
                    {"background_row", json::array()},
                    {"background_column", json::array()},
                    {"total", 0}});
  } else {
    auto report = eval::deployment_report(split.verified);
    out.update(eval::confusion_json(report.matrix, deps.catalog));
  }
  out["unverified"] = split.unverified;
  send_json(res, 200, out);
}

void ApiServer::Impl::report_blanks(const httplib::Request& req, httplib::Response& res) {
  const auto r = range(req);
  const double threshold = number_param<double>(req, "min_confidence").value_or(0.0);
  const auto stats = deps.store.blank_stats(r.from, r.to, threshold);
  json out = r.echo();
  out["total_assets"] = stats.total_assets;
  out["blank_assets"] = stats.blank_assets;
  out["blank_fraction"] = stats.blank_fraction ? json(*stats.blank_fraction) : json(nullptr);
  send_json(res, 200, out);
}

std::map<std::string, ApiServer::Impl::Handler> ApiServer::Impl::handlers() {
  using Req = const httplib::Request&;
  using Res = httplib::Response&;
  auto& store = deps.store;
  std::map<std::string, Handler> h;

  h["GET /api/health"] = [&store](Req, Res res) {
    send_json(res, 200,
              json{{"status", "ok"},
                   {"assets", store.asset_count()},
                   {"detections", store.detection_count()},
                   {"alerts", store.alert_count()}});
  };
  h["GET /api/spec"] = [](Req, Res res) { send_json(res, 200, api_description()); };
  h["GET /api/catalog"] = [this](Req, Res res) {
    json items = json::array();
    for (const auto& e : deps.catalog.entries()) items.push_back(e);
    send_json(res, 200, json{{"items", std::move(items)}});
  };
  h["POST /api/images"] = [this](Req req, Res res) { upload(req, res); };

  h["GET /api/assets"] = [this, &store](Req req, Res res) {
    auto page = store.list_assets(page_limit(req), param(req, "cursor"));
    json items = json::array();
    for (const auto& a : page.items) items.push_back(asset_view(a));
    send_json(res, 200,
              json{{"items", std::move(items)},
                   {"next_cursor", page.next_cursor ? json(*page.next_cursor) : json(nullptr)}});
  };
  h["GET /api/assets/{id}"] = [this, &store](Req req, Res res) {
    auto a = store.get_asset(req.matches[1].str());
    if (!a) throw Error(Errc::not_found, fmt::format("no asset {}", req.matches[1].str()));
    json j = asset_view(*a);
    json dets = json::array();
    for (const auto& d : store.detections_for_asset(a->asset_id)) dets.push_back(detection_view(d));
    j["detections"] = std::move(dets);
    send_json(res, 200, j);
  };
  h["GET /api/assets/{id}/image"] = [&store](Req req, Res res) {
    auto a = store.get_asset(req.matches[1].str());
    if (!a) throw Error(Errc::not_found, fmt::format("no asset {}", req.matches[1].str()));
    auto bytes = store.read_blob(a->storage_key);
    if (!bytes) throw Error(Errc::not_found, fmt::format("image of asset {} is missing", a->asset_id));
    const auto etag = fmt::format("\"{}\"", a->content_hash);
    res.set_header("Cache-Control", "public, max-age=31536000, immutable");
    res.set_header("ETag", etag);
    if (req.get_header_value("If-None-Match") == etag) {
      res.status = 304;
      return;
    }
    auto type = gateway::sniff_image_type(*bytes);
    res.status = 200;
    res.set_content(std::move(*bytes),
                    std::string(type ? gateway::mime_type(*type) : "application/octet-stream"));
  };

  h["GET /api/detections"] = [this](Req req, Res res) { list_detections(req, res); };
  h["GET /api/detections/{id}"] = [this, &store](Req req, Res res) {
    auto d = store.get_detection(req.matches[1].str());
    if (!d) throw Error(Errc::not_found, fmt::format("no detection {}", req.matches[1].str()));
    send_json(res, 200, detection_view(*d));
  };
  h["POST /api/detections/{id}/verify"] = [this](Req req, Res res) { verify(req, res); };
  h["GET /api/detections/{id}/verdicts"] = [&store](Req req, Res res) {
    const std::string id = req.matches[1];
    if (!store.get_detection(id)) throw Error(Errc::not_found, fmt::format("no detection {}", id));
    json items = json::array();
    for (const auto& v : store.verdict_history(id)) items.push_back(v.verdict);
    send_json(res, 200, json{{"items", std::move(items)}});
  };

  h["GET /api/cameras"] = [&store](Req req, Res res) {
    send_json(res, 200, page_json(store.list_cameras(page_limit(req), param(req, "cursor"))));
  };
  h["POST /api/cameras"] = [&store](Req req, Res res) {
    auto cam = decode_body<CameraSource>(parse_body(req));
    if (cam.camera_id.empty()) fail(422, "invalid_argument", "camera_id must not be empty");
    if (store.get_camera(cam.camera_id)) {
      fail(409, "conflict", fmt::format("camera {} already exists", cam.camera_id));
    }
    store.put_camera(cam);
    send_json(res, 201, json(cam));
  };
  h["GET /api/cameras/{id}"] = [&store](Req req, Res res) {
    auto cam = store.get_camera(req.matches[1].str());
    if (!cam) throw Error(Errc::not_found, fmt::format("no camera {}", req.matches[1].str()));
    send_json(res, 200, json(*cam));
  };
  h["PUT /api/cameras/{id}"] = [&store](Req req, Res res) {
    json body = parse_body(req);
    if (body.is_object() && !body.contains("camera_id")) body["camera_id"] = req.matches[1].str();
    auto cam = decode_body<CameraSource>(body);
    if (cam.camera_id != req.matches[1].str()) {
      fail(422, "invalid_argument", "camera_id in the body differs from the path");
    }
    store.put_camera(cam);
    send_json(res, 200, json(cam));
  };
  h["DELETE /api/cameras/{id}"] = [&store](Req req, Res res) {
    if (!store.delete_camera(req.matches[1].str())) {
      throw Error(Errc::not_found, fmt::format("no camera {}", req.matches[1].str()));
    }
    res.status = 204;
  };

  h["GET /api/alert-rules"] = [&store](Req req, Res res) {
    send_json(res, 200, page_json(store.list_rules(page_limit(req), param(req, "cursor"))));
  };
  h["POST /api/alert-rules"] = [this, &store](Req req, Res res) {
    auto rule = decode_body<AlertRule>(parse_body(req));
    for (int c : rule.class_ids) {
      if (!deps.catalog.contains(c)) {
        fail(422, std::string(to_string(Errc::unknown_class)), fmt::format("class {} is not in the catalog", c));
      }
    }
    validate(rule);
    if (store.get_rule(rule.rule_id)) {
      fail(409, "conflict", fmt::format("rule {} already exists", rule.rule_id));
    }
    store.put_rule(rule);
    send_json(res, 201, json(rule));
  };
  h["GET /api/alert-rules/{id}"] = [&store](Req req, Res res) {
    auto rule = store.get_rule(req.matches[1].str());
    if (!rule) throw Error(Errc::not_found, fmt::format("no rule {}", req.matches[1].str()));
    send_json(res, 200, json(*rule));
  };
  h["PUT /api/alert-rules/{id}"] = [this, &store](Req req, Res res) {
    json body = parse_body(req);
    if (body.is_object() && !body.contains("rule_id")) body["rule_id"] = req.matches[1].str();
    auto rule = decode_body<AlertRule>(body);
    if (rule.rule_id != req.matches[1].str()) {
      fail(422, "invalid_argument", "rule_id in the body differs from the path");
    }
    for (int c : rule.class_ids) {
      if (!deps.catalog.contains(c)) {
        fail(422, std::string(to_string(Errc::unknown_class)), fmt::format("class {} is not in the catalog", c));
      }
    }
    validate(rule);
    store.put_rule(rule);
    send_json(res, 200, json(rule));
  };
  h["DELETE /api/alert-rules/{id}"] = [&store](Req req, Res res) {
    if (!store.delete_rule(req.matches[1].str())) {
      throw Error(Errc::not_found, fmt::format("no rule {}", req.matches[1].str()));
    }
    res.status = 204;
  };

  h["GET /api/alerts"] = [&store](Req req, Res res) {
    store::AlertFilter f;
    f.rule_id = param(req, "rule_id");
    if (auto s = param(req, "status")) {
      try {
        f.status = parse_delivery_state(*s);
      } catch (const Error&) {
        fail(400, "bad_request", "status must be pending, delivered or failed");
      }
    }
    f.limit = page_limit(req);
    f.cursor = param(req, "cursor");
    send_json(res, 200, page_json(store.list_alerts(f)));
  };
  h["GET /api/alerts/{id}"] = [&store](Req req, Res res) {
    auto a = store.get_alert(req.matches[1].str());
    if (!a) throw Error(Errc::not_found, fmt::format("no alert {}", req.matches[1].str()));
    send_json(res, 200, json(*a));
  };
  h["POST /api/alerts/{id}/replay"] = [this, &store](Req req, Res res) {
    const std::string id = req.matches[1];
    if (!store.get_alert(id)) throw Error(Errc::not_found, fmt::format("no alert {}", id));
    if (deps.delivery == nullptr) fail(503, "unavailable", "alert delivery is not running");
    deps.delivery->replay(id);
    send_json(res, 202, json(*store.get_alert(id)));
  };

  h["GET /api/reports/metrics"] = [this](Req req, Res res) { report_metrics(req, res); };
  h["GET /api/reports/confusion"] = [this](Req req, Res res) { report_confusion(req, res); };
  h["GET /api/reports/blanks"] = [this](Req req, Res res) { report_blanks(req, res); };

  h["GET /api/quarantine"] = [&store](Req req, Res res) {
    auto page = store.list_quarantine(page_limit(req), param(req, "cursor"));
    json items = json::array();
    for (const auto& q : page.items) {
      items.push_back({{"entry_id", q.entry_id},
                       {"reason", q.reason},
                       {"sender", q.sender},
                       {"path", q.path},
                       {"received_at", format_rfc3339(q.received_at)}});
    }
    send_json(res, 200,
              json{{"items", std::move(items)},
                   {"next_cursor", page.next_cursor ? json(*page.next_cursor) : json(nullptr)}});
  };
  h["GET /api/queue"] = [this](Req, Res res) {
    if (deps.spool == nullptr) {
      send_json(res, 200, json{{"depth", 0}, {"capacity", 0}});
      return;
    }
    send_json(res, 200, json{{"depth", deps.spool->depth()}, {"capacity", deps.spool->capacity()}});
  };
  return h;
}

void ApiServer::Impl::install() {
  auto table = handlers();
  for (const auto& route : api_routes()) {
    auto key = fmt::format("{} {}", route.method, route.path);
    auto it = table.find(key);
    if (it == table.end()) throw Error(Errc::config_error, fmt::format("route {} has no handler", key));
    const auto pattern = route_pattern(route.path);
    auto handler = wrap(std::move(it->second));
    table.erase(it);
    if (route.method == "GET") server.Get(pattern, std::move(handler));
    else if (route.method == "POST") server.Post(pattern, std::move(handler));
    else if (route.method == "PUT") server.Put(pattern, std::move(handler));
    else if (route.method == "DELETE") server.Delete(pattern, std::move(handler));
  }
  if (!table.empty()) {
    throw Error(Errc::config_error, fmt::format("handler {} is not listed", table.begin()->first));
  }

  server.set_payload_max_length(deps.config.max_attachment_mb * 1024u * 1024u * 8u + (1u << 20));
  server.set_error_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    if (res.status == 304) return httplib::Server::HandlerResponse::Unhandled;
    const auto request_id = random_id();
    res.set_header("X-Request-Id", request_id);
    switch (res.status) {
      case 404:
        error_response(res, 404, "route_not_found",
                       fmt::format("no route for {} {}", req.method, req.path), request_id);
        break;
      case 413:
        error_response(res, 413, std::string(to_string(Errc::oversize_attachment)),
                       "request body too large", request_id);
        break;
      default:
        error_response(res, res.status, "http_error", httplib::status_message(res.status),
                       request_id);
    }
    return httplib::Server::HandlerResponse::Handled;
  });
  server.set_exception_handler(
      [this](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "unknown error";
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          what = e.what();
        } catch (...) {
        }
        error_response(res, 500, "internal", what, random_id());
      });
  if (!deps.config.static_dir.empty()) {
    if (!server.set_mount_point("/", deps.config.static_dir.string())) {
      throw Error(Errc::config_error,
                  fmt::format("STATIC_DIR {} is not a directory", deps.config.static_dir.string()));
    }
  }
}

ApiServer::ApiServer(ApiDependencies deps) : impl_(std::make_unique<Impl>(deps)) {
  impl_->install();
}

ApiServer::~ApiServer() { stop(); }

void ApiServer::start(const net::Endpoint& bind) {
  int port = 0;
  if (bind.port == 0) {
    port = impl_->server.bind_to_any_port(bind.host);
  } else {
    port = impl_->server.bind_to_port(bind.host, bind.port) ? bind.port : -1;
  }
  if (port <= 0) {
    throw Error(Errc::io_error, fmt::format("cannot bind API to {}:{}", bind.host, bind.port));
  }
  impl_->port = static_cast<std::uint16_t>(port);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  spdlog::info("API listening on {}:{}", bind.host, impl_->port);
}

void ApiServer::stop() {
  if (!impl_) return;
  if (impl_->thread.joinable()) {
    impl_->server.stop();
    impl_->thread.join();
  }
}

std::uint16_t ApiServer::port() const noexcept { return impl_->port; }

}  // namespace trapwatch::service
