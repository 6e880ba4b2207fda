#include <doctest.h>

#include <functional>
#include <regex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mail.hpp"
#include "support.hpp"
#include "trapwatch/core/error.hpp"
#include "trapwatch/core/hash.hpp"
#include "trapwatch/core/time.hpp"
#include "trapwatch/gateway/detector.hpp"
#include "trapwatch/gateway/image.hpp"
#include "trapwatch/ingest/smtp_server.hpp"
#include "trapwatch/service/api.hpp"
#include "trapwatch/service/app.hpp"
#include "trapwatch/service/config.hpp"
#include "trapwatch/service/pipeline.hpp"
#include "trapwatch/store/store.hpp"

using namespace trapwatch;
using namespace trapwatch::service;
using namespace std::chrono_literals;
using json = nlohmann::json;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::io_error;
}

const Timestamp t0 = *parse_rfc3339("2023-06-01T12:00:00Z");

std::string jpeg(unsigned seed, int w = 64, int h = 48) {
  return gateway::encode_image(gateway::make_test_image(w, h, seed), gateway::ImageType::jpeg);
}

using MockTable = std::map<std::string, gateway::RawModelOutput, std::less<>>;

/// One box of `cls` in the middle of the model input.
void add_mock(MockTable& table, const std::string& bytes, int cls, double score = 0.9) {
  gateway::RawModelOutput out;
  out.rows.push_back({200, 250, 440, 390, score, cls});
  table[sha256_hex(bytes)] = out;
}

/// Pipeline and API server over a fresh store.
struct Harness {
  test::TempDir dir;
  ServiceConfig config;
  std::unique_ptr<store::EventStore> store;
  gateway::Detector detector;
  Pipeline pipeline;
  ApiServer server;
  httplib::Client client;

  explicit Harness(MockTable table = {}, ServiceConfig c = {})
      : config(with_dir(std::move(c))),
        store(store::EventStore::open(config.data_dir)),
        detector(std::make_shared<gateway::MockBackend>(std::move(table)), gateway::DetectorConfig{}),
        pipeline(*store, detector, nullptr, SpeciesCatalog::default_catalog()),
        server(ApiDependencies{*store, pipeline, SpeciesCatalog::default_catalog(), config}),
        client(start()) {
    client.set_read_timeout(10, 0);
  }

  ServiceConfig with_dir(ServiceConfig c) {
    c.data_dir = dir.path() / "data";
    return c;
  }

  std::string start() {
    server.start({"127.0.0.1", 0});
    return fmt::format("http://127.0.0.1:{}", server.port());
  }

  json get(const std::string& path, int expect) {
    auto res = client.Get(path);
    REQUIRE(res);
    CHECK_MESSAGE(res->status == expect, path, " ", res->body);
    return res->body.empty() ? json() : json::parse(res->body);
  }

  json send(const std::string& method, const std::string& path, const json& body, int expect) {
    httplib::Result res = method == "POST"  ? client.Post(path, body.dump(), "application/json")
                          : method == "PUT" ? client.Put(path, body.dump(), "application/json")
                                            : client.Delete(path);
    REQUIRE(res);
    CHECK_MESSAGE(res->status == expect, method, " ", path, " ", res->body);
    return res->body.empty() ? json() : json::parse(res->body);
  }

  json upload(const httplib::MultipartFormDataItems& items, int expect) {
    auto res = client.Post("/api/images", items);
    REQUIRE(res);
    CHECK_MESSAGE(res->status == expect, res->body);
    return json::parse(res->body);
  }
};

void check_api_error(const json& j, int status, const std::string& code) {
  CHECK(j["http_status"] == status);
  CHECK(j["code"] == code);
  CHECK(j["message"].is_string());
  CHECK(j["request_id"].is_string());
}

/// Seeds one asset whose verified detections reproduce the deployment counts:
/// detection class is the prediction, the verdict is the actual class.
void seed_deployment(store::EventStore& s, Timestamp at) {
  ImageAsset a;
  a.content_hash = sha256_hex("deployment");
  a.asset_id = asset_id_for_hash(a.content_hash);
  a.width = 1920;
  a.height = 1072;
  a.received_at = a.trigger_time = at;
  a.storage_key = store::EventStore::blob_key(a.content_hash, "jpg");
  const std::vector<std::tuple<int, int, int>> cells{
      {22, 22, 662}, {22, 18, 36}, {22, 20, 33}, {23, 20, 25}, {23, 23, 302}, {20, 20, 13}};
  std::vector<Detection> ds;
  std::vector<int> actual;
  for (const auto& [truth, predicted, n] : cells) {
    for (int i = 0; i < n; ++i) {
      Detection d;
      d.asset_id = a.asset_id;
      d.detection_id = gateway::detection_id_for(a.asset_id, ds.size());
      d.box = BoundingBox{10, 10, 100, 100};
      d.class_id = predicted;
      d.confidence = 0.9;
      d.model_version = "1";
      ds.push_back(d);
      actual.push_back(truth);
    }
  }
  s.put_asset(a, ds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    s.record_verdict(ds[i].detection_id, HumanVerdict{actual[i], "seed", at});
  }
}

const json* find_class(const json& classes, int id) {
  for (const auto& c : classes) {
    if (c["class_id"] == id) return &c;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("config text and environment") {
  ServiceConfig c;
  apply_config_text(c, "# comment\nAPI_BIND=127.0.0.1:9000\n\nCONFIDENCE_THRESHOLD = 0.5\nNMS=true\n");
  CHECK(c.api_bind == "127.0.0.1:9000");
  CHECK(c.confidence_threshold == 0.5);
  CHECK(c.nms);
  CHECK(code_of([&] { apply_setting(c, "NOPE", "1"); }) == Errc::config_error);
  CHECK(code_of([&] { apply_setting(c, "QUEUE_CAPACITY", "lots"); }) == Errc::config_error);
  CHECK(code_of([&] { apply_config_text(c, "no equals sign\n"); }) == Errc::config_error);
  apply_environment(c, [](const std::string& key) -> std::optional<std::string> {
    if (key == "AUTH_TOKEN") return "s3cret";
    if (key == "DETECTOR") return "remote";
    return std::nullopt;
  });
  CHECK(c.auth_token == "s3cret");
  CHECK(c.detector == "remote");
  CHECK(code_of([&] { validate(c); }) == Errc::config_error);
  c.detector_endpoint = "http://127.0.0.1:8000";
  CHECK_NOTHROW(validate(c));
  c.detector = "magic";
  CHECK(code_of([&] { validate(c); }) == Errc::config_error);
  c.detector = "mock";
  c.confidence_threshold = 1.5;
  CHECK(code_of([&] { validate(c); }) == Errc::config_error);

  ServiceConfig d;
  d.data_dir = "/srv/trap";
  CHECK(d.effective_queue_dir() == "/srv/trap/queue");
  CHECK(d.effective_quarantine_dir() == "/srv/trap/quarantine");
  for (const auto& key : {"API_BIND", "AUTH_TOKEN", "DETECTOR", "DETECTOR_ENDPOINT", "CONFIDENCE_THRESHOLD"}) {
    CHECK(config_keys().count(key) == 1);
  }
}

TEST_CASE("config file then environment") {
  test::TempDir dir;
  test::spit(dir / "trap.conf", "API_BIND=127.0.0.1:1234\nLOG_LEVEL=debug\n");
  ::setenv("API_BIND", "127.0.0.1:4321", 1);
  auto c = load_config(dir / "trap.conf");
  ::unsetenv("API_BIND");
  CHECK(c.api_bind == "127.0.0.1:4321");
  CHECK(c.log_level == "debug");
  CHECK(code_of([&] { load_config(dir / "missing.conf"); }) == Errc::config_error);
}

TEST_CASE("error codes map to HTTP statuses") {
  CHECK(http_status_for(Errc::not_found) == 404);
  CHECK(http_status_for(Errc::unknown_detection) == 404);
  CHECK(http_status_for(Errc::unknown_class) == 422);
  CHECK(http_status_for(Errc::undecodable_image) == 422);
  CHECK(http_status_for(Errc::bad_cursor) == 400);
  CHECK(http_status_for(Errc::integrity_violation) == 409);
  CHECK(http_status_for(Errc::oversize_attachment) == 413);
  CHECK(http_status_for(Errc::shape_mismatch) == 502);
  CHECK(http_status_for(Errc::backend_unavailable) == 503);
  CHECK(http_status_for(Errc::timeout) == 504);
  CHECK(http_status_for(Errc::io_error) == 500);
  ApiError e{404, "not_found", "gone", "rid"};
  CHECK(to_json(e) == json{{"http_status", 404}, {"code", "not_found"}, {"message", "gone"}, {"request_id", "rid"}});
}

TEST_CASE("route table and description agree") {
  const auto spec = api_description();
  CHECK(spec["openapi"].is_string());
  std::size_t n = 0;
  for (const auto& r : api_routes()) {
    std::string method = r.method;
    std::transform(method.begin(), method.end(), method.begin(), ::tolower);
    CHECK_MESSAGE(spec["paths"][r.path].contains(method), r.method, " ", r.path);
    ++n;
  }
  std::size_t described = 0;
  for (const auto& [path, methods] : spec["paths"].items()) described += methods.size();
  CHECK(described == n);
}

TEST_CASE("pipeline dedups on content and fires alerts") {
  const auto img = jpeg(1);
  MockTable table;
  add_mock(table, img, 23);
  Harness h(table);
  h.store->put_rule([] {
    AlertRule r;
    r.rule_id = "chicks";
    r.name = "chicks";
    r.class_ids = {23};
    return r;
  }());
  ProcessRequest req{img, std::nullopt, t0, std::nullopt};
  auto first = h.pipeline.process(req);
  CHECK_FALSE(first.duplicate);
  CHECK(first.asset.asset_id == asset_id_for_hash(sha256_hex(img)));
  CHECK(first.asset.trigger_time == t0);
  CHECK(first.asset.width == 64);
  REQUIRE(first.detections.size() == 1);
  CHECK(first.detections[0].class_id == 23);
  CHECK(first.alerts.size() == 1);
  CHECK(h.store->read_blob(first.asset.storage_key) == img);
  auto second = h.pipeline.process(req);
  CHECK(second.duplicate);
  CHECK(second.asset.asset_id == first.asset.asset_id);
  CHECK(second.alerts.empty());
  CHECK(h.store->asset_count() == 1);
  CHECK(h.store->alert_count() == 1);
  CHECK(code_of([&] { h.pipeline.process({"junk", std::nullopt, t0, std::nullopt}); }) ==
        Errc::undecodable_image);
  CHECK(code_of([&] { h.pipeline.process({"", std::nullopt, t0, std::nullopt}); }) ==
        Errc::undecodable_image);
}

TEST_CASE("every route in the contract is served") {
  Harness h;
  std::regex param(R"(\{[a-z_]+\})");
  for (const auto& r : api_routes()) {
    const auto path = std::regex_replace(r.path, param, "missing");
    httplib::Result res = r.method == "GET"    ? h.client.Get(path)
                          : r.method == "POST" ? h.client.Post(path, "{}", "application/json")
                          : r.method == "PUT"  ? h.client.Put(path, "{}", "application/json")
                                               : h.client.Delete(path);
    REQUIRE(res);
    CHECK_MESSAGE(res->has_header("X-Request-Id"), r.path);
    if (res->status >= 400) {
      auto body = json::parse(res->body);
      CHECK_MESSAGE(body["code"] != "route_not_found", r.method, " ", r.path);
      CHECK(body["http_status"] == res->status);
    }
  }
  check_api_error(h.get("/api/nothing-here", 404), 404, "route_not_found");
  check_api_error(h.get("/api/assets/missing", 404), 404, "not_found");
  auto health = h.get("/api/health", 200);
  CHECK(health["status"] == "ok");
  auto catalog = h.get("/api/catalog", 200);
  CHECK(catalog["items"].size() == SpeciesCatalog::default_catalog().entries().size());
}

TEST_CASE("bearer token") {
  ServiceConfig c;
  c.auth_token = "tok";
  Harness h({}, c);
  check_api_error(h.get("/api/detections", 401), 401, "unauthorized");
  h.get("/api/health", 200);
  h.get("/api/spec", 200);
  h.client.set_bearer_token_auth("wrong");
  h.get("/api/detections", 401);
  h.client.set_bearer_token_auth("tok");
  h.get("/api/detections", 200);

  ServiceConfig open;
  open.auth_token = "tok";
  open.anonymous_read = true;
  Harness g({}, open);
  g.get("/api/detections", 200);
  g.send("POST", "/api/cameras", json{{"camera_id", "c"}}, 401);
}

TEST_CASE("uploads") {
  const auto a = jpeg(1), b = jpeg(2), c = jpeg(3);
  MockTable table;
  add_mock(table, a, 22);
  add_mock(table, b, 23, 0.2);  // below the threshold
  ServiceConfig cfg;
  cfg.max_attachment_mb = 1;
  Harness h(table, cfg);

  auto r = h.upload({{"files", a, "a.jpg", "image/jpeg"},
                     {"files", b, "b.jpg", "image/jpeg"},
                     {"files", "not an image", "c.jpg", "image/jpeg"}},
                    200);
  auto& results = r["results"];
  REQUIRE(results.size() == 3);
  CHECK(results[0]["filename"] == "a.jpg");
  CHECK(results[0]["asset_id"] == asset_id_for_hash(sha256_hex(a)));
  CHECK(results[0]["duplicate"] == false);
  REQUIRE(results[0]["detections"].size() == 1);
  CHECK(results[0]["detections"][0]["class_name"] == "Numenius arquata");
  CHECK(results[1]["detections"].empty());
  CHECK(results[2]["error"]["code"] == "undecodable_image");

  auto again = h.upload({{"files", a, "again.jpg", "image/jpeg"}}, 200);
  CHECK(again["results"][0]["duplicate"] == true);
  CHECK(again["results"][0]["asset_id"] == results[0]["asset_id"]);
  CHECK(h.store->asset_count() == 2);

  check_api_error(h.upload({{"note", "hello", "", ""}}, 400), 400, "no_files");
  auto res = h.client.Post("/api/images", "{}", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  check_api_error(h.upload({{"files", std::string(1024 * 1024 + 1, 'x'), "big.jpg", "image/jpeg"}}, 413),
                  413, "oversize_attachment");
  check_api_error(h.upload({{"files", c, "c.jpg", "image/jpeg"}, {"camera_id", "nope", "", ""}}, 422),
                  422, "unknown_camera");
  h.send("POST", "/api/cameras", json{{"camera_id", "cam-a"}, {"name", "North"}}, 201);
  auto with_cam = h.upload({{"files", c, "c.jpg", "image/jpeg"}, {"camera_id", "cam-a", "", ""}}, 200);
  auto asset = h.get("/api/assets/" + with_cam["results"][0]["asset_id"].get<std::string>(), 200);
  CHECK(asset["camera_id"] == "cam-a");
}

TEST_CASE("images are served with validators") {
  const auto a = jpeg(4);
  Harness h;
  auto r = h.upload({{"files", a, "a.jpg", "image/jpeg"}}, 200);
  const std::string id = r["results"][0]["asset_id"];
  auto res = h.client.Get("/api/assets/" + id + "/image");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body == a);
  CHECK(res->get_header_value("Content-Type") == "image/jpeg");
  const auto etag = res->get_header_value("ETag");
  CHECK(etag.find(sha256_hex(a)) != std::string::npos);
  auto cached = h.client.Get("/api/assets/" + id + "/image", {{"If-None-Match", etag}});
  REQUIRE(cached);
  CHECK(cached->status == 304);
  h.get("/api/assets/missing/image", 404);
}

TEST_CASE("review flow") {
  const auto a = jpeg(5);
  MockTable table;
  add_mock(table, a, 22);
  Harness h(table);
  h.upload({{"files", a, "a.jpg", "image/jpeg"}}, 200);
  auto queue = h.get("/api/detections?verified=false", 200);
  REQUIRE(queue["items"].size() == 1);
  const auto& item = queue["items"][0];
  CHECK(item["image_url"].get<std::string>().find("/api/assets/") == 0);
  CHECK(item["image_width"] == 64);
  CHECK(item["box"].is_object());
  const std::string id = item["detection_id"];
  const std::string path = "/api/detections/" + id + "/verify";

  check_api_error(h.send("POST", path, json{{"true_class_id", 22}, {"sentinel", "BLANK"}}, 422), 422,
                  "invalid_argument");
  check_api_error(h.send("POST", path, json::object(), 422), 422, "invalid_argument");
  check_api_error(h.send("POST", path, json{{"true_class_id", 99}}, 422), 422, "unknown_class");
  check_api_error(h.send("POST", path, json{{"sentinel", "MAYBE"}}, 422), 422, "invalid_argument");
  auto bad = h.client.Post(path, "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  check_api_error(h.send("POST", "/api/detections/nope/verify", json{{"true_class_id", 22}}, 404), 404,
                  "unknown_detection");

  auto v = h.send("POST", path, json{{"true_class_id", 22}, {"reviewer", "ann"}}, 200);
  CHECK(v["verdict"]["true_class_id"] == 22);
  h.send("POST", path, json{{"true_class_id", 22}, {"reviewer", "ann"}}, 200);
  auto nogood = h.send("POST", path, json{{"sentinel", "NO_GOOD"}, {"reviewer", "bob"}}, 200);
  CHECK(nogood["verdict"]["sentinel"] == "NO_GOOD");
  auto history = h.get("/api/detections/" + id + "/verdicts", 200);
  REQUIRE(history["items"].size() == 3);
  CHECK(history["items"][0]["reviewer"] == "ann");
  CHECK(history["items"][2]["reviewer"] == "bob");
  CHECK(h.get("/api/detections?verified=false", 200)["items"].empty());
  CHECK(h.get("/api/detections/" + id, 200)["verdict"]["sentinel"] == "NO_GOOD");
  h.get("/api/detections/nope", 404);
}

TEST_CASE("detection listing pages and filters") {
  MockTable table;
  std::vector<std::string> images;
  for (unsigned i = 0; i < 12; ++i) {
    images.push_back(jpeg(100 + i));
    add_mock(table, images.back(), i % 2 ? 23 : 22);
  }
  Harness h(table);
  httplib::MultipartFormDataItems items;
  for (std::size_t i = 0; i < images.size(); ++i) {
    items.push_back({"files", images[i], fmt::format("{}.jpg", i), "image/jpeg"});
  }
  h.upload(items, 200);
  std::set<std::string> seen;
  std::string url = "/api/detections?limit=5";
  for (int pages = 0; pages < 10; ++pages) {
    auto page = h.get(url, 200);
    for (const auto& d : page["items"]) seen.insert(d["detection_id"].get<std::string>());
    if (page["next_cursor"].is_null()) break;
    url = "/api/detections?limit=5&cursor=" + page["next_cursor"].get<std::string>();
  }
  CHECK(seen.size() == 12);
  CHECK(h.get("/api/detections?class_id=23", 200)["items"].size() == 6);
  CHECK(h.get("/api/detections?min_confidence=0.95", 200)["items"].empty());
  check_api_error(h.get("/api/detections?cursor=zz", 400), 400, "bad_cursor");
  h.get("/api/detections?limit=0", 400);
  h.get("/api/detections?class_id=abc", 400);
  h.get("/api/detections?verified=maybe", 400);
  CHECK(h.get("/api/assets?limit=500", 200)["items"].size() == 12);
}

TEST_CASE("camera and rule editors") {
  Harness h;
  json cam{{"camera_id", "cam-a"}, {"name", "North"}, {"smtp_sender", "a@traps.test"},
           {"location", {{"lat", 55.0}, {"lon", -3.0}}}};
  h.send("POST", "/api/cameras", cam, 201);
  check_api_error(h.send("POST", "/api/cameras", cam, 409), 409, "conflict");
  cam["name"] = "North ridge";
  h.send("PUT", "/api/cameras/cam-a", cam, 200);
  CHECK(h.get("/api/cameras/cam-a", 200)["name"] == "North ridge");
  CHECK(h.get("/api/cameras", 200)["items"].size() == 1);
  h.send("PUT", "/api/cameras/cam-b", cam, 422);
  h.send("POST", "/api/cameras", json{{"camera_id", "cam-c"}, {"smtp_sender", "a@traps.test"}}, 409);
  h.send("DELETE", "/api/cameras/cam-a", json(), 204);
  h.send("DELETE", "/api/cameras/cam-a", json(), 404);
  h.get("/api/cameras/cam-a", 404);

  json rule{{"rule_id", "chicks"}, {"name", "Chicks"}, {"class_ids", {23}}, {"min_confidence", 0.5}};
  h.send("POST", "/api/alert-rules", rule, 201);
  auto rules = h.get("/api/alert-rules", 200)["items"];
  REQUIRE(rules.size() == 1);
  CHECK(rules[0]["class_ids"] == json{23});
  CHECK(rules[0]["min_confidence"] == 0.5);
  h.send("POST", "/api/alert-rules", rule, 409);
  check_api_error(h.send("POST", "/api/alert-rules",
                         json{{"rule_id", "x"}, {"class_ids", {99}}}, 422),
                  422, "unknown_class");
  h.send("POST", "/api/alert-rules", json{{"rule_id", "y"}, {"class_ids", {22}}, {"min_confidence", 1.5}}, 422);
  rule["cooldown_seconds"] = 600;
  h.send("PUT", "/api/alert-rules/chicks", rule, 200);
  CHECK(h.get("/api/alert-rules/chicks", 200)["cooldown_seconds"] == 600);
  h.send("DELETE", "/api/alert-rules/chicks", json(), 204);
  h.get("/api/alert-rules/chicks", 404);
  CHECK(h.get("/api/alerts", 200)["items"].empty());
  h.get("/api/alerts/missing", 404);
  h.send("POST", "/api/alerts/missing/replay", json::object(), 404);
}

TEST_CASE("alert listing and replay without delivery") {
  const auto a = jpeg(9);
  MockTable table;
  add_mock(table, a, 23);
  Harness h(table);
  h.send("POST", "/api/alert-rules", json{{"rule_id", "chicks"}, {"class_ids", {23}}}, 201);
  h.upload({{"files", a, "a.jpg", "image/jpeg"}}, 200);
  auto alerts = h.get("/api/alerts?rule_id=chicks", 200)["items"];
  REQUIRE(alerts.size() == 1);
  CHECK(alerts[0]["delivery_status"] == "pending");
  CHECK(h.get("/api/alerts?status=delivered", 200)["items"].empty());
  h.get("/api/alerts?status=lost", 400);
  const std::string id = alerts[0]["alert_id"];
  CHECK(h.get("/api/alerts/" + id, 200)["rule_id"] == "chicks");
  check_api_error(h.send("POST", "/api/alerts/" + id + "/replay", json::object(), 503), 503,
                  "unavailable");
}

TEST_CASE("reports over the deployment fixture") {
  Harness h;
  seed_deployment(*h.store, t0);
  auto metrics = h.get("/api/reports/metrics", 200);
  CHECK(metrics["evaluated"] == 1071);
  CHECK(metrics["unverified"] == 0);
  const auto* arquata = find_class(metrics["classes"], 22);
  const auto* chick = find_class(metrics["classes"], 23);
  REQUIRE(arquata);
  REQUIRE(chick);
  CHECK((*arquata)["sensitivity"]["percent"] == "90.56%");
  CHECK((*arquata)["f1"]["percent"] == "95.05%");
  CHECK((*arquata)["precision"]["percent"] == "100.00%");
  CHECK((*arquata)["specificity"]["percent"] == "100.00%");
  CHECK((*arquata)["tp"] == 662);
  CHECK((*chick)["sensitivity"]["percent"] == "92.35%");
  CHECK((*chick)["f1"]["percent"] == "96.03%");
  CHECK(metrics["macro"]["policy"] == "skip-undefined");

  auto confusion = h.get("/api/reports/confusion", 200);
  const auto& classes = confusion["classes"];
  std::size_t row = 0;
  for (; row < classes.size(); ++row) {
    if (classes[row]["class_id"] == 22) break;
  }
  REQUIRE(row < classes.size());
  CHECK(confusion["matrix"][row][row] == 662);
  CHECK(confusion["total"] == 1071);

  auto inside = h.get("/api/reports/metrics?from=2023-01-01T00:00:00Z&to=2024-01-01T00:00:00Z", 200);
  CHECK(inside["evaluated"] == 1071);
  auto empty = h.get("/api/reports/metrics?from=2030-01-01T00:00:00Z", 200);
  CHECK(empty["classes"].empty());
  CHECK(empty["macro"].is_null());
  check_api_error(h.get("/api/reports/metrics?from=2024-01-01T00:00:00Z&to=2023-01-01T00:00:00Z", 422),
                  422, "bad_range");
  check_api_error(h.get("/api/reports/metrics?from=yesterday", 422), 422, "bad_range");
  h.get("/api/reports/metrics?policy=average-of-whatever", 400);
  CHECK(h.get("/api/reports/metrics?policy=undefined-as-zero", 200)["macro"]["policy"] ==
        "undefined-as-zero");

  auto blanks = h.get("/api/reports/blanks", 200);
  CHECK(blanks["total_assets"] == 1);
  CHECK(blanks["blank_assets"] == 0);
  CHECK(h.get("/api/reports/blanks?from=2030-01-01T00:00:00Z", 200)["blank_fraction"].is_null());
}

TEST_CASE("a verdict changes the next metrics report") {
  Harness h;
  seed_deployment(*h.store, t0);
  auto before = h.get("/api/reports/metrics", 200);
  auto ovis = h.get("/api/detections?class_id=20&limit=1", 200)["items"][0];
  h.send("POST", "/api/detections/" + ovis["detection_id"].get<std::string>() + "/verify",
         json{{"true_class_id", 20}}, 200);
  auto after = h.get("/api/reports/metrics", 200);
  CHECK(find_class(before["classes"], 20)->at("tp") != find_class(after["classes"], 20)->at("tp"));
}

TEST_CASE("unverified detections stay out of reports") {
  const auto a = jpeg(6);
  MockTable table;
  add_mock(table, a, 22);
  Harness h(table);
  h.upload({{"files", a, "a.jpg", "image/jpeg"}}, 200);
  auto m = h.get("/api/reports/metrics", 200);
  CHECK(m["classes"].empty());
  CHECK(m["unverified"] == 1);
  auto c = h.get("/api/reports/confusion", 200);
  CHECK(c["total"] == 0);
  CHECK(c["unverified"] == 1);
}

TEST_CASE("SMTP and upload agree on asset ids") {
  test::TempDir dir;
  const auto a = jpeg(7), b = jpeg(8);
  std::string table;
  for (const auto& img : {a, b}) table += sha256_hex(img) + " 200 250 440 390 0.9 23\n";
  test::spit(dir / "mock.tsv", table);
  ServiceConfig c;
  c.api_bind = "127.0.0.1:0";
  c.smtp_bind = "127.0.0.1:0";
  c.data_dir = dir / "data";
  c.mock_table = dir / "mock.tsv";
  c.seed_default_rule = false;
  c.ingest_workers = 1;
  Application app(c);
  app.start();
  httplib::Client api(fmt::format("http://127.0.0.1:{}", app.api_port()));
  auto res = api.Post("/api/cameras", json{{"camera_id", "cam-a"}, {"smtp_sender", "cam-a@traps.test"}}.dump(),
                      "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 201);

  test::Mail m;
  m.from = "cam-a@traps.test";
  m.message_id = "<one@cam-a>";
  m.attachments = {{"a.jpg", "image/jpeg", a}};
  auto sent = ingest::smtp_send({"127.0.0.1", app.smtp_port()}, m.from, {"in@trapwatch.test"},
                                test::build_mail(m), 10s);
  CHECK(sent.code == 250);
  const auto id = asset_id_for_hash(sha256_hex(a));
  for (int i = 0; i < 200 && !app.store().get_asset(id); ++i) std::this_thread::sleep_for(25ms);
  REQUIRE(app.store().get_asset(id).has_value());
  CHECK(app.store().get_asset(id)->camera_id == "cam-a");

  auto up = api.Post("/api/images", httplib::MultipartFormDataItems{{"files", a, "a.jpg", "image/jpeg"},
                                                                    {"files", b, "b.jpg", "image/jpeg"}});
  REQUIRE(up);
  auto body = json::parse(up->body);
  CHECK(body["results"][0]["asset_id"] == id);
  CHECK(body["results"][0]["duplicate"] == true);
  CHECK(body["results"][1]["duplicate"] == false);

  m.message_id = "<two@cam-a>";
  m.attachments = {{"b.jpg", "image/jpeg", b}};
  sent = ingest::smtp_send({"127.0.0.1", app.smtp_port()}, m.from, {"in@trapwatch.test"},
                           test::build_mail(m), 10s);
  CHECK(sent.code == 250);
  CHECK(app.store().asset_count() == 2);
  auto queue = api.Get("/api/queue");
  REQUIRE(queue);
  CHECK(queue->status == 200);
  app.stop();
  app.stop();
}
