#include "trapwatch/eval/average_precision.hpp"

#include <algorithm>
#include <set>

#include "trapwatch/eval/matching.hpp"

namespace trapwatch::eval {
namespace {

struct RankedClass {
  std::vector<bool> tp;  // per rank
  std::size_t n_truth = 0;
};

RankedClass rank_class(std::span<const ScoredPrediction> preds,
                       std::span<const GroundTruth> truths, int class_id,
                       double iou_threshold) {
  std::vector<ScoredPrediction> cls_preds;
  std::vector<GroundTruth> cls_truths;
  for (const auto& p : preds) {
    if (p.class_id == class_id) cls_preds.push_back(p);
  }
  for (const auto& t : truths) {
    if (t.class_id == class_id) cls_truths.push_back(t);
  }
  const auto match = match_detections(cls_preds, cls_truths, iou_threshold, ClassPolicy::same_class);
  RankedClass out;
  out.n_truth = cls_truths.size();
  for (std::size_t i : ranking_order(cls_preds)) out.tp.push_back(match.pred_to_truth[i].has_value());
  return out;
}

// Recall and precision envelope at every rank.
void envelope(const RankedClass& rc, std::vector<double>& recall, std::vector<double>& precision) {
  const auto n = rc.tp.size();
  recall.resize(n);
  precision.resize(n);
  std::size_t cum = 0;
  for (std::size_t k = 0; k < n; ++k) {
    cum += rc.tp[k] ? 1 : 0;
    recall[k] = static_cast<double>(cum) / static_cast<double>(rc.n_truth);
    precision[k] = static_cast<double>(cum) / static_cast<double>(k + 1);
  }
  for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
}

}  // namespace

std::optional<double> average_precision(std::span<const ScoredPrediction> preds,
                                        std::span<const GroundTruth> truths, int class_id,
                                        double iou_threshold) {
  const auto rc = rank_class(preds, truths, class_id, iou_threshold);
  if (rc.n_truth == 0) return std::nullopt;
  std::vector<double> recall, precision;
  envelope(rc, recall, precision);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < recall.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

CurveSeries pr_curve(std::span<const ScoredPrediction> preds, std::span<const GroundTruth> truths,
                     int class_id, double iou_threshold) {
  CurveSeries out;
  out.kind = CurveKind::pr;
  const auto rc = rank_class(preds, truths, class_id, iou_threshold);
  if (rc.n_truth == 0) return out;
  envelope(rc, out.thresholds, out.values);
  return out;
}

MapResult mean_average_precision(std::span<const ScoredPrediction> preds,
                                 std::span<const GroundTruth> truths, double iou_threshold) {
  std::set<int> with_truth;
  std::set<int> predicted;
  for (const auto& t : truths) with_truth.insert(t.class_id);
  for (const auto& p : preds) predicted.insert(p.class_id);

  MapResult out;
  double sum = 0.0;
  for (int c : with_truth) {
    double ap = *average_precision(preds, truths, c, iou_threshold);
    out.per_class[c] = ap;
    sum += ap;
  }
  for (int c : predicted) {
    if (!with_truth.count(c)) out.classes_without_truths.push_back(c);
  }
  if (!with_truth.empty()) out.map = sum / static_cast<double>(with_truth.size());
  return out;
}

}  // namespace trapwatch::eval
