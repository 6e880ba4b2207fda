#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "trapwatch/eval/records.hpp"

namespace trapwatch::eval {

enum class ClassPolicy {
  same_class,      // detection mode: a prediction may only claim its own class
  class_agnostic,  // confusion mode: any truth in the image, class compared later
};

struct MatchResult {
  std::vector<std::optional<std::size_t>> pred_to_truth;
  std::vector<std::optional<std::size_t>> truth_to_pred;

  std::size_t true_positives() const;
  std::size_t false_positives() const { return pred_to_truth.size() - true_positives(); }
  std::size_t false_negatives() const { return truth_to_pred.size() - true_positives(); }

  /// (prediction index, matched truth index or nullopt), in input order.
  std::vector<std::pair<std::size_t, std::optional<std::size_t>>> pairs() const;
};

/// Strict ranking used everywhere predictions are ordered: confidence
/// descending, then image_id, then box corners lexicographically, then
/// class id.
bool ranks_before(const ScoredPrediction& a, const ScoredPrediction& b);
std::vector<std::size_t> ranking_order(std::span<const ScoredPrediction> preds);

/// Greedy matching per image: predictions in ranking order each claim the
/// still-unmatched eligible truth with the highest IoU >= threshold (lowest
/// truth index on ties).
MatchResult match_detections(std::span<const ScoredPrediction> preds,
                             std::span<const GroundTruth> truths, double iou_threshold = 0.5,
                             ClassPolicy policy = ClassPolicy::same_class);

}  // namespace trapwatch::eval
