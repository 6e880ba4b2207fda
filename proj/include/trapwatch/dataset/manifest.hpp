#pragma once

#include <map>
#include <string>

namespace trapwatch::dataset {

/// Training hyperparameters exported alongside a dataset.
struct TrainingManifest {
  int image_size = 640;
  int batch = 256;
  int epochs = 50;
  double learning_rate = 0.01;
  double momentum = 0.937;
  double hsv_h = 0.015;
  double hsv_s = 0.7;
  double hsv_v = 0.4;
  double fliplr = 0.5;
  double translate = 0.1;
  double scale = 0.5;
  double erasing = 0.4;

  friend bool operator==(const TrainingManifest&, const TrainingManifest&) = default;
};

/// Applies `key -> value` overrides on top of the defaults.
/// Throws Errc::invalid_override for unknown keys or out-of-range values.
TrainingManifest make_manifest(const std::map<std::string, std::string>& overrides);

/// Flat `key=value` lines in a fixed key order.
std::string to_text(const TrainingManifest& manifest);
TrainingManifest parse_manifest(const std::string& text);

std::string export_training_manifest(const std::map<std::string, std::string>& overrides);

}  // namespace trapwatch::dataset
