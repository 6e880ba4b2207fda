#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "trapwatch/eval/curves.hpp"
#include "trapwatch/eval/records.hpp"

namespace trapwatch::eval {

/// All-points interpolated AP for one class:
/// sum over ranks of (r_k - r_{k-1}) * max_{j >= k} p_j.
/// nullopt when the class has no ground truth.
std::optional<double> average_precision(std::span<const ScoredPrediction> preds,
                                        std::span<const GroundTruth> truths, int class_id,
                                        double iou_threshold = 0.5);

/// Interpolated precision envelope against recall for one class.
CurveSeries pr_curve(std::span<const ScoredPrediction> preds,
                     std::span<const GroundTruth> truths, int class_id,
                     double iou_threshold = 0.5);

struct MapResult {
  /// Mean over classes that have ground truth; nullopt if none do.
  std::optional<double> map;
  std::map<int, double> per_class;
  /// Classes that only appear in predictions; excluded from the mean.
  std::vector<int> classes_without_truths;
};

MapResult mean_average_precision(std::span<const ScoredPrediction> preds,
                                 std::span<const GroundTruth> truths,
                                 double iou_threshold = 0.5);

inline MapResult map_at_50(std::span<const ScoredPrediction> preds,
                           std::span<const GroundTruth> truths) {
  return mean_average_precision(preds, truths, 0.5);
}

}  // namespace trapwatch::eval
