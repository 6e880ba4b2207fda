#include <doctest.h>

#include <atomic>
#include <cmath>
#include <functional>
#include <random>
#include <thread>

#include <httplib.h>

#include "http_stub.hpp"
#include "support.hpp"
#include "trapwatch/core/error.hpp"
#include "trapwatch/core/hash.hpp"
#include "trapwatch/core/time.hpp"
#include "trapwatch/gateway/detector.hpp"
#include "trapwatch/gateway/image.hpp"
#include "trapwatch/gateway/letterbox.hpp"
#include "wire.hpp"

using namespace trapwatch;
using namespace trapwatch::gateway;

using Stub = test::HttpStub;

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

std::vector<float> golden_tensor() {
  std::vector<float> out;
  std::istringstream in(test::slurp(test::fixture("remote_tensor.txt")));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(std::stof(line));
  }
  return out;
}

RemoteConfig quick(const std::string& endpoint) {
  RemoteConfig c;
  c.endpoint = endpoint;
  c.attempts = 3;
  c.backoff = std::chrono::milliseconds(5);
  c.timeout = std::chrono::milliseconds(2000);
  return c;
}

ImageAsset asset_for(const std::string& bytes) {
  ImageAsset a;
  a.content_hash = sha256_hex(bytes);
  a.asset_id = asset_id_for_hash(a.content_hash);
  return a;
}

}  // namespace

TEST_CASE("letterbox of a 1920x1072 frame") {
  auto t = letterbox(1920, 1072);
  CHECK(t.scale == doctest::Approx(1.0 / 3.0));
  CHECK(t.scaled_width == 640);
  CHECK(t.scaled_height == 357);
  CHECK(t.pad_left == 0);
  CHECK(t.pad_top == 141);
  CHECK(t.pad_bottom() == 142);
}

TEST_CASE("letterbox of the mean resolution") {
  auto t = letterbox(972, 769);
  CHECK(t.scaled_width == 640);
  CHECK(t.scaled_height == 506);
  CHECK(t.pad_top == 67);
  CHECK(t.pad_top + t.scaled_height + t.pad_bottom() == 640);
}

TEST_CASE("letterbox rejects empty sizes") {
  CHECK(code_of([] { letterbox(0, 5); }) == Errc::invalid_argument);
  CHECK(code_of([] { letterbox(5, 5, 0); }) == Errc::invalid_argument);
}

TEST_CASE("unletterbox maps the content area back to the whole frame") {
  auto t = letterbox(1920, 1072);
  auto b = unletterbox_box({0, 141, 640, 498, Frame::model_input}, t, 1920, 1072);
  CHECK(b.frame == Frame::original);
  CHECK(b.x_min == doctest::Approx(0));
  CHECK(b.y_min == doctest::Approx(0));
  CHECK(b.x_max == doctest::Approx(1920));
  CHECK(b.y_max == doctest::Approx(1071));
  CHECK(code_of([&] { unletterbox_box({0, 0, 10, 10, Frame::original}, t, 1920, 1072); }) ==
        Errc::frame_mismatch);
  CHECK(code_of([&] { unletterbox_box({0, 0, 640, 100, Frame::model_input}, t, 1920, 1072); }) ==
        Errc::degenerate_box);
}

TEST_CASE("letterbox round trip stays within a pixel") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> size(1, 4096);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const int w = size(rng), h = size(rng);
    std::uniform_real_distribution<double> xs(0, w), ys(0, h);
    double x0 = xs(rng), x1 = xs(rng), y0 = ys(rng), y1 = ys(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    if (x1 - x0 < 1e-6 || y1 - y0 < 1e-6) continue;
    auto t = letterbox(w, h);
    CHECK(t.scaled_width <= 640);
    CHECK(t.scaled_height <= 640);
    CHECK(std::max(t.scaled_width, t.scaled_height) == 640);
    BoundingBox in{x0, y0, x1, y1, Frame::original};
    auto back = unletterbox_box(letterbox_box(in, t), t, w, h);
    worst = std::max({worst, std::abs(back.x_min - x0), std::abs(back.y_min - y0),
                      std::abs(back.x_max - x1), std::abs(back.y_max - y1)});
  }
  CHECK(worst <= 1.0);
}

TEST_CASE("image sniffing and decoding") {
  auto img = make_test_image(64, 48, 3);
  auto jpeg = encode_image(img, ImageType::jpeg);
  auto png = encode_image(img, ImageType::png);
  CHECK(sniff_image_type(jpeg) == ImageType::jpeg);
  CHECK(sniff_image_type(png) == ImageType::png);
  CHECK_FALSE(sniff_image_type("GIF89a....").has_value());
  CHECK(file_extension(ImageType::png) == "png");
  auto d = decode_image(png);
  CHECK(d.width() == 64);
  CHECK(d.height() == 48);
  CHECK(code_of([] { decode_image("not an image"); }) == Errc::undecodable_image);
  CHECK(code_of([&] { decode_image(jpeg.substr(0, 40)); }) == Errc::undecodable_image);
  auto t = letterbox(64, 48, 32);
  auto tensor = d.to_tensor(t);
  CHECK(tensor.size() == 3u * 32 * 32);
  for (float v : tensor) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
}

TEST_CASE("EXIF capture time") {
  auto jpeg = encode_image(make_test_image(32, 32, 1), ImageType::jpeg);
  CHECK_FALSE(exif_datetime_original(jpeg).has_value());
  auto tagged = with_exif_datetime(jpeg, "2021:05:04 03:02:01");
  CHECK(exif_datetime_original(tagged) == "2021:05:04 03:02:01");
  CHECK(decode_image(tagged).width() == 32);
  auto ts = parse_exif_datetime(*exif_datetime_original(tagged));
  REQUIRE(ts.has_value());
  CHECK(format_rfc3339(*ts) == "2021-05-04T03:02:01Z");
}

TEST_CASE("mock detector maps boxes back to the original frame") {
  auto bytes = encode_image(make_test_image(1920, 1072, 9), ImageType::jpeg);
  auto asset = asset_for(bytes);
  RawModelOutput raw;
  raw.rows.push_back({100, 200, 300, 400, 0.9, 22});
  raw.rows.push_back({10, 150, 50, 190, 0.2, 22});  // under threshold
  raw.rows.push_back({0, 0, 0, 0, 0.0, 0});         // padding
  auto backend = std::make_shared<MockBackend>(
      std::map<std::string, RawModelOutput, std::less<>>{{asset.content_hash, raw}});
  Detector det(backend, DetectorConfig{});
  auto out = det.detect(asset, bytes);
  REQUIRE(out.size() == 1);
  CHECK(out[0].box.x_min == doctest::Approx(300));
  CHECK(out[0].box.y_min == doctest::Approx(177));
  CHECK(out[0].box.x_max == doctest::Approx(900));
  CHECK(out[0].box.y_max == doctest::Approx(777));
  CHECK(out[0].class_id == 22);
  CHECK(out[0].asset_id == asset.asset_id);
  CHECK(out[0].detection_id == detection_id_for(asset.asset_id, 0));
  CHECK(det.detect(asset, bytes) == out);

  auto other = encode_image(make_test_image(40, 40, 2), ImageType::png);
  CHECK(det.detect(asset_for(other), other).empty());
}

TEST_CASE("detector rejects classes outside the catalog") {
  auto bytes = encode_image(make_test_image(100, 100, 4), ImageType::png);
  auto asset = asset_for(bytes);
  RawModelOutput raw;
  raw.rows.push_back({1, 1, 50, 50, 0.9, 99});
  auto backend = std::make_shared<MockBackend>(
      std::map<std::string, RawModelOutput, std::less<>>{{asset.content_hash, raw}});
  Detector det(backend, DetectorConfig{});
  CHECK(code_of([&] { det.detect(asset, bytes); }) == Errc::backend_protocol_error);
}

TEST_CASE("mock table parsing") {
  const std::string h(64, 'a');
  auto m = MockBackend::parse("# comment\n" + h + " 1 2 3 4 0.5 22\n" + h + " 5 6 7 8 0.6 23\n\n");
  CHECK(m.size() == 1);
  CHECK(m.lookup(h).rows.size() == 2);
  CHECK(m.lookup(std::string(64, 'b')).rows.empty());
  CHECK(code_of([&] { MockBackend::parse(h + " 1 2 3\n"); }) == Errc::invalid_argument);
  CHECK(code_of([] { MockBackend::parse("abc 1 2 3 4 0.5 22\n"); }) == Errc::invalid_argument);
}

TEST_CASE("remote request matches the golden exchange") {
  const auto expected_request = test::slurp(test::fixture("remote_request.json"));
  const auto response = test::slurp(test::fixture("remote_response.json"));
  std::string received;
  Stub stub([&](const httplib::Request& req, httplib::Response& res) {
    received = req.body;
    res.set_content(response, "application/json");
  });
  RemoteBackend backend(quick(stub.endpoint()));
  auto out = backend.remote_infer(golden_tensor(), 4);
  std::string why;
  CHECK_MESSAGE(test::same_modulo_floats(received, expected_request, &why), why);
  CHECK(build_infer_request(golden_tensor(), 4) == received);
  REQUIRE(out.rows.size() == 300);
  CHECK(out.rows[0] == RawRow{100.5, 200.25, 300.0, 400.75, 0.91, 23});
  CHECK(out.rows[1] == RawRow{10, 20, 30, 40, 0.45, 22});
  CHECK(out.rows[2].score == 0.0);
}

TEST_CASE("remote shape mismatch") {
  const auto shorter = test::slurp(test::fixture("remote_response_short.json"));
  CHECK(code_of([&] { parse_infer_response(shorter, 300); }) == Errc::shape_mismatch);
  CHECK(code_of([] { parse_infer_response("{}", 300); }) == Errc::backend_protocol_error);
  CHECK(code_of([] { parse_infer_response("not json", 300); }) == Errc::backend_protocol_error);
  Stub stub([&](const httplib::Request&, httplib::Response& res) {
    res.set_content(shorter, "application/json");
  });
  RemoteBackend backend(quick(stub.endpoint()));
  CHECK(code_of([&] { backend.remote_infer(golden_tensor(), 4); }) == Errc::shape_mismatch);
}

TEST_CASE("client errors are not retried") {
  Stub stub([](const httplib::Request&, httplib::Response& res) { res.status = 400; });
  RemoteBackend backend(quick(stub.endpoint()));
  CHECK(code_of([&] { backend.remote_infer(golden_tensor(), 4); }) == Errc::non_2xx);
  CHECK(stub.calls == 1);
}

TEST_CASE("server errors are retried") {
  const auto response = test::slurp(test::fixture("remote_response.json"));
  std::atomic<int> seen{0};
  Stub flaky([&](const httplib::Request&, httplib::Response& res) {
    if (++seen < 3) {
      res.status = 503;
      return;
    }
    res.set_content(response, "application/json");
  });
  RemoteBackend backend(quick(flaky.endpoint()));
  CHECK(backend.remote_infer(golden_tensor(), 4).rows.size() == 300);
  CHECK(flaky.calls == 3);

  Stub down([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  RemoteBackend failing(quick(down.endpoint()));
  CHECK(code_of([&] { failing.remote_infer(golden_tensor(), 4); }) == Errc::non_2xx);
  CHECK(down.calls == 3);
}

TEST_CASE("unreachable server") {
  auto config = quick("http://127.0.0.1:1");
  config.attempts = 2;
  RemoteBackend backend(config);
  CHECK(code_of([&] { backend.remote_infer(golden_tensor(), 4); }) == Errc::backend_unavailable);
  CHECK(code_of([] { RemoteBackend(RemoteConfig{}); }) == Errc::config_error);
}
