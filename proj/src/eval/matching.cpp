#include "trapwatch/eval/matching.hpp"

#include <algorithm>
#include <numeric>
#include <string_view>
#include <tuple>
#include <unordered_map>

#include "trapwatch/eval/iou.hpp"

namespace trapwatch::eval {

std::size_t MatchResult::true_positives() const {
  return static_cast<std::size_t>(
      std::count_if(pred_to_truth.begin(), pred_to_truth.end(),
                    [](const auto& m) { return m.has_value(); }));
}

std::vector<std::pair<std::size_t, std::optional<std::size_t>>> MatchResult::pairs() const {
  std::vector<std::pair<std::size_t, std::optional<std::size_t>>> out;
  out.reserve(pred_to_truth.size());
  for (std::size_t i = 0; i < pred_to_truth.size(); ++i) out.emplace_back(i, pred_to_truth[i]);
  return out;
}

bool ranks_before(const ScoredPrediction& a, const ScoredPrediction& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  return std::tie(a.image_id, a.box.x_min, a.box.y_min, a.box.x_max, a.box.y_max, a.class_id) <
         std::tie(b.image_id, b.box.x_min, b.box.y_min, b.box.x_max, b.box.y_max, b.class_id);
}

std::vector<std::size_t> ranking_order(std::span<const ScoredPrediction> preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ranks_before(preds[a], preds[b]);
  });
  return order;
}

MatchResult match_detections(std::span<const ScoredPrediction> preds,
                             std::span<const GroundTruth> truths, double iou_threshold,
                             ClassPolicy policy) {
  MatchResult result;
  result.pred_to_truth.assign(preds.size(), std::nullopt);
  result.truth_to_pred.assign(truths.size(), std::nullopt);

  std::unordered_map<std::string_view, std::vector<std::size_t>> truths_by_image;
  for (std::size_t t = 0; t < truths.size(); ++t) {
    truths_by_image[truths[t].image_id].push_back(t);
  }

  for (std::size_t p : ranking_order(preds)) {
    const auto& pred = preds[p];
    auto it = truths_by_image.find(pred.image_id);
    if (it == truths_by_image.end()) continue;
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t t : it->second) {
      if (result.truth_to_pred[t]) continue;
      if (policy == ClassPolicy::same_class && truths[t].class_id != pred.class_id) continue;
      const double v = iou(pred.box, truths[t].box);
      if (v >= iou_threshold && v > best_iou) {
        best = t;
        best_iou = v;
      }
    }
    if (best) {
      result.pred_to_truth[p] = best;
      result.truth_to_pred[*best] = p;
    }
  }
  return result;
}

}  // namespace trapwatch::eval
