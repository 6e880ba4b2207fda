#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "support.hpp"
#include "trapwatch/alert/delivery.hpp"
#include "trapwatch/alert/engine.hpp"
#include "trapwatch/core/error.hpp"
#include "trapwatch/core/hash.hpp"
#include "trapwatch/core/time.hpp"
#include "trapwatch/store/store.hpp"

using namespace trapwatch;
using namespace trapwatch::alert;
using namespace std::chrono_literals;

namespace {

const Timestamp t0 = *parse_rfc3339("2023-06-01T12:00:00Z");

Detection det(std::string id, int cls, double conf) {
  Detection d;
  d.detection_id = std::move(id);
  d.asset_id = "asset";
  d.box = BoundingBox{1, 2, 30, 40};
  d.class_id = cls;
  d.confidence = conf;
  return d;
}

AlertRule rule(std::string id, std::set<int> classes, std::int64_t cooldown = 0) {
  AlertRule r;
  r.rule_id = std::move(id);
  r.name = "rule";
  r.class_ids = std::move(classes);
  r.cooldown_seconds = cooldown;
  return r;
}

class Webhook {
 public:
  explicit Webhook(std::function<int(int)> status_for_call) {
    server_.Post("/hook", [this, status_for_call](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mutex_);
      bodies.push_back(req.body);
      res.status = status_for_call(static_cast<int>(bodies.size()));
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Webhook() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return fmt::format("http://127.0.0.1:{}/hook", port_); }
  std::size_t calls() {
    std::lock_guard lock(mutex_);
    return bodies.size();
  }

  std::vector<std::string> bodies;

 private:
  httplib::Server server_;
  std::thread thread_;
  std::mutex mutex_;
  int port_ = 0;
};

DeliveryConfig fast() {
  DeliveryConfig c;
  c.attempts = 3;
  c.backoff = 5ms;
  c.timeout = 2000ms;
  c.workers = 2;
  c.public_base_url = "http://trap.test";
  return c;
}

}  // namespace

TEST_CASE("rule matching") {
  auto r = rule("r", {22, 23});
  r.min_confidence = 0.5;
  const DetectionContext ctx{std::string("cam-a"), t0};
  const std::vector<AlertRule> rules{r};
  CHECK(evaluate(det("d", 22, 0.6), ctx, rules, {}, t0).size() == 1);
  CHECK(evaluate(det("d", 22, 0.5), ctx, rules, {}, t0).size() == 1);
  CHECK(evaluate(det("d", 22, 0.49), ctx, rules, {}, t0).empty());
  CHECK(evaluate(det("d", 20, 0.9), ctx, rules, {}, t0).empty());

  auto scoped = r;
  scoped.cameras = {"cam-b"};
  const std::vector<AlertRule> only_b{scoped};
  CHECK(evaluate(det("d", 22, 0.9), ctx, only_b, {}, t0).empty());
  CHECK(evaluate(det("d", 22, 0.9), DetectionContext{std::nullopt, t0}, only_b, {}, t0).empty());
  CHECK(evaluate(det("d", 22, 0.9), DetectionContext{std::string("cam-b"), t0}, only_b, {}, t0).size() == 1);

  auto off = r;
  off.enabled = false;
  const std::vector<AlertRule> disabled{off};
  CHECK(evaluate(det("d", 22, 0.9), ctx, disabled, {}, t0).empty());

  auto a = evaluate(det("d", 23, 0.9), ctx, rules, {}, t0 + 5s).at(0);
  CHECK(a.alert_id == alert_id_for("r", "d"));
  CHECK(a.event_time == t0);
  CHECK(a.fired_at == t0 + 5s);
  CHECK(a.camera_id == "cam-a");
  CHECK(a.class_id == 23);
  CHECK(a.status == DeliveryState::pending);
}

TEST_CASE("cooldown is keyed on rule, camera and class") {
  const std::vector<AlertRule> rules{rule("r", {22, 23}, 300)};
  const DetectionContext ctx{std::string("cam-a"), t0};
  auto first = evaluate(det("d1", 22, 0.9), ctx, rules, {}, t0);
  REQUIRE(first.size() == 1);
  CHECK(evaluate(det("d2", 22, 0.9), {std::string("cam-a"), t0 + 299s}, rules, first, t0).empty());
  CHECK(evaluate(det("d2", 22, 0.9), {std::string("cam-a"), t0 - 299s}, rules, first, t0).empty());
  CHECK(evaluate(det("d2", 22, 0.9), {std::string("cam-a"), t0 + 300s}, rules, first, t0).size() == 1);
  CHECK(evaluate(det("d2", 23, 0.9), {std::string("cam-a"), t0 + 10s}, rules, first, t0).size() == 1);
  CHECK(evaluate(det("d2", 22, 0.9), {std::string("cam-b"), t0 + 10s}, rules, first, t0).size() == 1);
  CHECK(max_cooldown_seconds(rules) == 300);
}

TEST_CASE("cooldown agrees with a sweep over random event streams") {
  std::mt19937_64 rng(2024);
  const std::vector<std::optional<std::string>> cams{std::nullopt, "cam-a", "cam-b"};
  const std::vector<int> classes{18, 20, 22, 23};
  int cases = 0;
  for (; cases < 1000; ++cases) {
    std::vector<AlertRule> rules;
    const int nrules = 1 + static_cast<int>(rng() % 3);
    for (int r = 0; r < nrules; ++r) {
      std::set<int> cls;
      for (int c : classes) {
        if (rng() % 2) cls.insert(c);
      }
      if (cls.empty()) cls.insert(22);
      auto x = rule(fmt::format("r{}", r), cls, static_cast<std::int64_t>(rng() % 600));
      x.min_confidence = (rng() % 5) / 10.0;
      if (rng() % 4 == 0) x.cameras = {"cam-a"};
      rules.push_back(x);
    }
    struct Event {
      Detection d;
      DetectionContext ctx;
    };
    std::vector<Event> events;
    const int n = 1 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
      events.push_back({det(fmt::format("d{}", i), classes[rng() % 4], (rng() % 100) / 100.0),
                        {cams[rng() % 3], t0 + std::chrono::seconds(rng() % 3600)}});
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.ctx.event_time < b.ctx.event_time; });

    std::vector<AlertEvent> fired;
    std::map<std::tuple<std::string, std::optional<std::string>, int>, std::vector<std::int64_t>> sweep;
    std::size_t expected = 0;
    for (const auto& e : events) {
      for (auto& a : evaluate(e.d, e.ctx, rules, fired, t0)) fired.push_back(a);
      for (const auto& r : rules) {
        if (!r.enabled || !r.class_ids.count(e.d.class_id) || e.d.confidence < r.min_confidence) continue;
        if (!r.cameras.empty() && (!e.ctx.camera_id || *e.ctx.camera_id != r.cameras[0])) continue;
        auto& times = sweep[{r.rule_id, e.ctx.camera_id, e.d.class_id}];
        const auto t = to_millis(e.ctx.event_time);
        if (!times.empty() && t - times.back() < r.cooldown_seconds * 1000) continue;
        times.push_back(t);
        ++expected;
      }
    }
    REQUIRE(fired.size() == expected);
    for (std::size_t i = 0; i < fired.size(); ++i) {
      for (std::size_t j = i + 1; j < fired.size(); ++j) {
        const auto& a = fired[i];
        const auto& b = fired[j];
        if (a.rule_id != b.rule_id || a.camera_id != b.camera_id || a.class_id != b.class_id) continue;
        const auto cooldown = std::find_if(rules.begin(), rules.end(), [&](const AlertRule& r) {
                                return r.rule_id == a.rule_id;
                              })->cooldown_seconds;
        REQUIRE(std::llabs(to_millis(a.event_time) - to_millis(b.event_time)) >= cooldown * 1000);
      }
    }
  }
  CHECK(cases == 1000);
}

TEST_CASE("clustered bursts give the same count in any order") {
  const std::vector<AlertRule> rules{rule("r", {23}, 300)};
  std::vector<std::int64_t> offsets{0, 60, 120, 1000, 1030, 2000};
  std::mt19937_64 rng(3);
  for (int round = 0; round < 200; ++round) {
    std::shuffle(offsets.begin(), offsets.end(), rng);
    std::vector<AlertEvent> fired;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      const DetectionContext ctx{std::string("cam-a"), t0 + std::chrono::seconds(offsets[i])};
      for (auto& a : evaluate(det(fmt::format("d{}", i), 23, 0.9), ctx, rules, fired, t0)) {
        fired.push_back(a);
      }
    }
    REQUIRE(fired.size() == 3);
  }
}

TEST_CASE("detections of one asset share the cooldown") {
  store::AlertContext ctx;
  ctx.asset.asset_id = "asset";
  ctx.asset.camera_id = "cam-a";
  ctx.asset.trigger_time = t0;
  ctx.detections = {det("d0", 22, 0.9), det("d1", 22, 0.8), det("d2", 23, 0.8)};
  ctx.rules = {rule("r", {22, 23}, 60)};
  CHECK(evaluate_asset(ctx, t0).size() == 2);
  ctx.rules[0].cooldown_seconds = 0;
  CHECK(evaluate_asset(ctx, t0).size() == 3);
  ctx.recent = {evaluate_asset(ctx, t0)[0]};
  ctx.rules[0].cooldown_seconds = 60;
  CHECK(evaluate_asset(ctx, t0).size() == 1);
}

TEST_CASE("default rule") {
  auto r = default_rule();
  CHECK_NOTHROW(validate(r));
  CHECK(r.class_ids == std::set<int>{22, 23});
  CHECK(r.sink.kind == SinkKind::log);
}

TEST_CASE("webhook payload") {
  AlertEvent a;
  a.alert_id = "al";
  a.rule_id = "r";
  a.camera_id = "cam-a";
  a.fired_at = t0;
  CameraSource cam{"cam-a", "North", GeoPoint{55.5, -3.25}, "a@t"};
  auto d = det("d", 23, 0.75);
  auto j = alert_payload(a, d, cam, SpeciesCatalog::default_catalog(), "http://x/img");
  CHECK(j["alert_id"] == "al");
  CHECK(j["rule_id"] == "r");
  CHECK(j["camera"]["id"] == "cam-a");
  CHECK(j["camera"]["name"] == "North");
  CHECK(j["camera"]["location"]["lat"] == 55.5);
  CHECK(j["detection"]["class"] == "Numenius arquata chick");
  CHECK(j["detection"]["confidence"] == 0.75);
  CHECK(j["detection"]["box"].is_object());
  CHECK(j["image_url"] == "http://x/img");
  CHECK(j["fired_at"] == "2023-06-01T12:00:00Z");
  auto anon = alert_payload(a, d, std::nullopt, SpeciesCatalog::default_catalog(), "u");
  CHECK(anon["camera"]["id"] == "cam-a");
  CHECK(anon["camera"]["location"].is_null());
}

TEST_CASE("webhook delivery retries") {
  const nlohmann::json payload{{"x", 1}};
  SUBCASE("first try") {
    Webhook hook([](int) { return 200; });
    auto out = deliver({SinkKind::webhook, hook.url()}, "a1", payload, fast());
    CHECK(out.state == DeliveryState::delivered);
    CHECK(out.attempts == 1);
    CHECK(nlohmann::json::parse(hook.bodies.at(0)) == payload);
  }
  SUBCASE("after two failures") {
    Webhook hook([](int call) { return call < 3 ? 503 : 200; });
    auto out = deliver({SinkKind::webhook, hook.url()}, "a1", payload, fast());
    CHECK(out.state == DeliveryState::delivered);
    CHECK(out.attempts == 3);
  }
  SUBCASE("never") {
    Webhook hook([](int) { return 500; });
    auto out = deliver({SinkKind::webhook, hook.url()}, "a1", payload, fast());
    CHECK(out.state == DeliveryState::failed);
    CHECK(out.attempts == 3);
    CHECK(out.error.find("500") != std::string::npos);
    CHECK(hook.calls() == 3);
  }
  SUBCASE("unreachable") {
    auto out = deliver({SinkKind::webhook, "http://127.0.0.1:1/hook"}, "a1", payload, fast());
    CHECK(out.state == DeliveryState::failed);
  }
  SUBCASE("log sink") {
    auto out = deliver({SinkKind::log, ""}, "a1", payload, fast());
    CHECK(out.state == DeliveryState::delivered);
  }
  SUBCASE("email without a relay") {
    auto out = deliver({SinkKind::email, "ops@t"}, "a1", payload, fast());
    CHECK(out.state == DeliveryState::failed);
  }
}

TEST_CASE("delivery pool records outcomes and replays failures") {
  test::TempDir dir;
  auto s = store::EventStore::open(dir.path());
  std::atomic<bool> healthy{false};
  Webhook hook([&](int) { return healthy ? 200 : 500; });
  auto r = rule("r", {22}, 0);
  r.sink = AlertSink{SinkKind::webhook, hook.url()};
  s->put_rule(r);
  s->put_camera(CameraSource{"cam-a", "North", std::nullopt, "a@t"});
  ImageAsset asset;
  asset.content_hash = sha256_hex("x");
  asset.asset_id = asset_id_for_hash(asset.content_hash);
  asset.width = asset.height = 100;
  asset.camera_id = "cam-a";
  asset.received_at = asset.trigger_time = t0;
  auto d = det("d0", 22, 0.9);
  d.asset_id = asset.asset_id;
  s->put_asset(asset, {d});
  auto alerts = s->fire_alerts(asset.asset_id, [](const store::AlertContext& c) {
    return evaluate_asset(c, t0);
  }, 0);
  REQUIRE(alerts.size() == 1);

  DeliveryPool pool(*s, fast());
  pool.submit(alerts[0]);
  REQUIRE(pool.wait_idle(10s));
  auto stored = s->get_alert(alerts[0].alert_id);
  CHECK(stored->status == DeliveryState::failed);
  CHECK(stored->attempts == 3);

  healthy = true;
  pool.replay(alerts[0].alert_id);
  REQUIRE(pool.wait_idle(10s));
  stored = s->get_alert(alerts[0].alert_id);
  CHECK(stored->status == DeliveryState::delivered);
  CHECK(stored->attempts == 4);
  auto body = nlohmann::json::parse(hook.bodies.back());
  CHECK(body["camera"]["name"] == "North");
  CHECK(body["image_url"] == "http://trap.test/api/assets/" + asset.asset_id + "/image");
  CHECK_THROWS_AS(pool.replay("missing"), Error);
}

TEST_CASE("pending alerts resume after a restart") {
  test::TempDir dir;
  auto s = store::EventStore::open(dir.path());
  s->put_rule(rule("r", {22}, 0));
  ImageAsset asset;
  asset.content_hash = sha256_hex("y");
  asset.asset_id = asset_id_for_hash(asset.content_hash);
  asset.width = asset.height = 100;
  asset.received_at = asset.trigger_time = t0;
  auto d = det("d0", 22, 0.9);
  d.asset_id = asset.asset_id;
  s->put_asset(asset, {d});
  s->fire_alerts(asset.asset_id, [](const store::AlertContext& c) { return evaluate_asset(c, t0); }, 0);
  DeliveryPool pool(*s, fast());
  CHECK(pool.resume_pending() == 1);
  REQUIRE(pool.wait_idle(10s));
  CHECK(s->alerts_with_status(DeliveryState::delivered).size() == 1);
  CHECK(pool.resume_pending() == 0);
}
