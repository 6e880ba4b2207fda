#include "trapwatch/dataset/manifest.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include <fmt/format.h>

#include "trapwatch/core/error.hpp"

namespace trapwatch::dataset {
namespace {

enum class Kind { count, positive_real, unit_fraction };

struct Field {
  const char* key;
  Kind kind;
  std::function<void(TrainingManifest&, double)> set;
  std::function<double(const TrainingManifest&)> get;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"image_size", Kind::count, [](auto& m, double v) { m.image_size = static_cast<int>(v); },
       [](const auto& m) { return static_cast<double>(m.image_size); }},
      {"batch", Kind::count, [](auto& m, double v) { m.batch = static_cast<int>(v); },
       [](const auto& m) { return static_cast<double>(m.batch); }},
      {"epochs", Kind::count, [](auto& m, double v) { m.epochs = static_cast<int>(v); },
       [](const auto& m) { return static_cast<double>(m.epochs); }},
      {"learning_rate", Kind::positive_real, [](auto& m, double v) { m.learning_rate = v; },
       [](const auto& m) { return m.learning_rate; }},
      {"momentum", Kind::positive_real, [](auto& m, double v) { m.momentum = v; },
       [](const auto& m) { return m.momentum; }},
      {"hsv_h", Kind::unit_fraction, [](auto& m, double v) { m.hsv_h = v; },
       [](const auto& m) { return m.hsv_h; }},
      {"hsv_s", Kind::unit_fraction, [](auto& m, double v) { m.hsv_s = v; },
       [](const auto& m) { return m.hsv_s; }},
      {"hsv_v", Kind::unit_fraction, [](auto& m, double v) { m.hsv_v = v; },
       [](const auto& m) { return m.hsv_v; }},
      {"fliplr", Kind::unit_fraction, [](auto& m, double v) { m.fliplr = v; },
       [](const auto& m) { return m.fliplr; }},
      {"translate", Kind::unit_fraction, [](auto& m, double v) { m.translate = v; },
       [](const auto& m) { return m.translate; }},
      {"scale", Kind::unit_fraction, [](auto& m, double v) { m.scale = v; },
       [](const auto& m) { return m.scale; }},
      {"erasing", Kind::unit_fraction, [](auto& m, double v) { m.erasing = v; },
       [](const auto& m) { return m.erasing; }},
  };
  return table;
}

double parse_value(const std::string& key, const std::string& text, Kind kind) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw Error(Errc::invalid_override, fmt::format("{}: '{}' is not a number", key, text));
  }
  switch (kind) {
    case Kind::count:
      if (v < 1.0 || v != std::floor(v) || v > 1e9) {
        throw Error(Errc::invalid_override,
                    fmt::format("{}: expected a positive integer, got {}", key, text));
      }
      break;
    case Kind::positive_real:
      if (!(v > 0.0)) {
        throw Error(Errc::invalid_override, fmt::format("{}: must be positive, got {}", key, text));
      }
      break;
    case Kind::unit_fraction:
      if (v < 0.0 || v > 1.0) {
        throw Error(Errc::invalid_override,
                    fmt::format("{}: must lie in [0,1], got {}", key, text));
      }
      break;
  }
  return v;
}

std::string format_value(double v, Kind kind) {
  if (kind == Kind::count) return fmt::format("{}", static_cast<long long>(v));
  // Shortest representation that round-trips: 0.01, 0.937, 0.4.
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

TrainingManifest make_manifest(const std::map<std::string, std::string>& overrides) {
  TrainingManifest m;
  for (const auto& [key, value] : overrides) {
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (key == f.key) field = &f;
    }
    if (field == nullptr) {
      throw Error(Errc::invalid_override, fmt::format("unknown hyperparameter '{}'", key));
    }
    field->set(m, parse_value(key, value, field->kind));
  }
  return m;
}

std::string to_text(const TrainingManifest& manifest) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += '=';
    out += format_value(f.get(manifest), f.kind);
    out += '\n';
  }
  return out;
}

TrainingManifest parse_manifest(const std::string& text) {
  std::map<std::string, std::string> values;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::invalid_override, fmt::format("manifest line '{}' lacks '='", line));
    }
    values[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return make_manifest(values);
}

std::string export_training_manifest(const std::map<std::string, std::string>& overrides) {
  return to_text(make_manifest(overrides));
}

}  // namespace trapwatch::dataset
