#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "trapwatch/core/box.hpp"

namespace trapwatch::eval {

struct ScoredPrediction {
  std::string image_id;
  int class_id = 0;
  double confidence = 0.0;
  BoundingBox box;
};

/// One ground-truth annotation.
struct GroundTruth {
  std::string image_id;
  int class_id = 0;
  BoundingBox box;
};

/// Line format `image_id class_id confidence x_min y_min x_max y_max`;
/// blank lines and `#` comments are skipped. Truth files may omit the
/// confidence column. Throws Errc::invalid_argument with the line number.
std::vector<ScoredPrediction> parse_predictions(std::string_view text);
std::vector<GroundTruth> parse_truths(std::string_view text);
std::vector<ScoredPrediction> load_predictions(const std::filesystem::path& path);
std::vector<GroundTruth> load_truths(const std::filesystem::path& path);

std::string format_prediction(const ScoredPrediction& p);

}  // namespace trapwatch::eval
