#include "trapwatch/eval/curves.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "trapwatch/core/error.hpp"
#include "trapwatch/eval/matching.hpp"

namespace trapwatch::eval {

std::string_view to_string(CurveKind k) noexcept {
  switch (k) {
    case CurveKind::precision: return "precision";
    case CurveKind::recall: return "recall";
    case CurveKind::f1: return "f1";
    case CurveKind::pr: return "pr";
  }
  return "precision";
}

std::vector<double> default_grid(std::span<const ScoredPrediction> preds) {
  std::vector<double> grid;
  grid.reserve(101 + preds.size());
  for (int i = 0; i <= 100; ++i) grid.push_back(i / 100.0);
  for (const auto& p : preds) grid.push_back(p.confidence);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

ConfidenceCurves confidence_curves(std::span<const ScoredPrediction> preds,
                                   std::span<const GroundTruth> truths, double iou_threshold,
                                   std::span<const double> grid) {
  std::vector<double> owned;
  if (grid.empty()) {
    owned = default_grid(preds);
    grid = owned;
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0) || (i > 0 && !(grid[i] > grid[i - 1]))) {
      throw Error(Errc::invalid_argument, "confidence grid must be ascending within [0,1]");
    }
  }

  // Greedy matching visits predictions in ranking order, so the survivors of
  // any cut-off are a prefix of that order and keep exactly the decisions
  // they get in one full pass.
  const auto match = match_detections(preds, truths, iou_threshold, ClassPolicy::same_class);
  struct Scored {
    double confidence;
    bool tp;
  };
  std::vector<Scored> scored;
  scored.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    scored.push_back({preds[i].confidence, match.pred_to_truth[i].has_value()});
  }
  std::sort(scored.begin(), scored.end(),
            [](const Scored& a, const Scored& b) { return a.confidence > b.confidence; });
  std::vector<std::size_t> tp_prefix(scored.size() + 1, 0);
  for (std::size_t i = 0; i < scored.size(); ++i) {
    tp_prefix[i + 1] = tp_prefix[i] + (scored[i].tp ? 1 : 0);
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto n_truth = static_cast<double>(truths.size());
  ConfidenceCurves out;
  out.precision.kind = CurveKind::precision;
  out.recall.kind = CurveKind::recall;
  out.f1.kind = CurveKind::f1;
  bool have_peak = false;
  for (double t : grid) {
    // Number of predictions with confidence >= t.
    auto kept = static_cast<std::size_t>(
        std::partition_point(scored.begin(), scored.end(),
                             [t](const Scored& s) { return s.confidence >= t; }) -
        scored.begin());
    const auto tp = static_cast<double>(tp_prefix[kept]);
    const auto np = static_cast<double>(kept);
    const double precision = np > 0 ? tp / np : nan;
    const double recall = n_truth > 0 ? tp / n_truth : nan;
    const double f1 = (np + n_truth) > 0 ? 2.0 * tp / (np + n_truth) : nan;
    out.precision.thresholds.push_back(t);
    out.precision.values.push_back(precision);
    out.recall.thresholds.push_back(t);
    out.recall.values.push_back(recall);
    out.f1.thresholds.push_back(t);
    out.f1.values.push_back(f1);
    if (!std::isnan(f1) && (!have_peak || f1 > out.peak_f1)) {
      out.peak_f1 = f1;
      out.peak_threshold = t;
      have_peak = true;
    }
    if (!std::isnan(recall) && (!out.max_recall || recall > *out.max_recall)) {
      out.max_recall = recall;
    }
  }
  return out;
}

std::string to_csv(const CurveSeries& series) {
  std::string out = fmt::format("threshold,{}\n", to_string(series.kind));
  for (std::size_t i = 0; i < series.thresholds.size(); ++i) {
    const double v = series.values[i];
    if (std::isnan(v)) {
      out += fmt::format("{:.6f},nan\n", series.thresholds[i]);
    } else {
      out += fmt::format("{:.6f},{:.6f}\n", series.thresholds[i], v);
    }
  }
  return out;
}

}  // namespace trapwatch::eval
