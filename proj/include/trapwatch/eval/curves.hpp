#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trapwatch/eval/records.hpp"

namespace trapwatch::eval {

enum class CurveKind { precision, recall, f1, pr };
std::string_view to_string(CurveKind k) noexcept;

/// Paired samples. For confidence curves `thresholds` are confidence cut-offs;
/// for a PR curve they are recall levels. Undefined points (0/0) hold NaN.
struct CurveSeries {
  CurveKind kind = CurveKind::precision;
  std::vector<double> thresholds;
  std::vector<double> values;
};

struct ConfidenceCurves {
  CurveSeries precision;
  CurveSeries recall;
  CurveSeries f1;
  /// Highest F1 on the grid and the lowest threshold reaching it.
  double peak_f1 = 0.0;
  double peak_threshold = 0.0;
  std::optional<double> max_recall;
};

/// 101 evenly spaced points 0.00..1.00 merged with every distinct prediction
/// confidence, ascending.
std::vector<double> default_grid(std::span<const ScoredPrediction> preds);

/// For each threshold t, predictions with confidence < t are discarded and
/// the rest matched (same-class greedy) to compute micro precision, recall
/// and F1 over all classes. An empty `grid` means default_grid().
ConfidenceCurves confidence_curves(std::span<const ScoredPrediction> preds,
                                   std::span<const GroundTruth> truths, double iou_threshold,
                                   std::span<const double> grid = {});

/// `threshold,value` lines with a header row.
std::string to_csv(const CurveSeries& series);

}  // namespace trapwatch::eval
