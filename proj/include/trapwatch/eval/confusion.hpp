#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "trapwatch/eval/matching.hpp"

namespace trapwatch::eval {

/// Square counts indexed [actual][predicted] over an ordered class list,
/// plus an optional background row (predictions that matched nothing) and
/// background column (truths nobody predicted).
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<int> classes);

  /// Rows/columns in `classes` order; `counts[a][p]`.
  static ConfusionMatrix from_counts(std::vector<int> classes,
                                     const std::vector<std::vector<std::int64_t>>& counts);

  /// nullopt on either side means background.
  void add(std::optional<int> actual, std::optional<int> predicted, std::int64_t n = 1);

  const std::vector<int>& classes() const noexcept { return classes_; }
  bool has_class(int class_id) const noexcept;

  std::int64_t count(int actual, int predicted) const;
  /// Predictions of `predicted` with no matching truth.
  std::int64_t background_row(int predicted) const;
  /// Truths of `actual` that no prediction matched.
  std::int64_t background_column(int actual) const;
  bool has_background() const noexcept { return background_total_ > 0; }

  std::int64_t row_total(int actual) const;     // includes background column
  std::int64_t column_total(int predicted) const;  // includes background row
  std::int64_t trace() const;
  std::int64_t total() const noexcept { return total_; }

 private:
  std::size_t index_of(int class_id) const;

  std::vector<int> classes_;
  // (n+1)x(n+1); index n is background.
  std::vector<std::vector<std::int64_t>> cells_;
  std::int64_t total_ = 0;
  std::int64_t background_total_ = 0;
};

/// Class-agnostic greedy matching, then matched pairs land in [truth][pred],
/// unmatched truths in the background column and unmatched predictions in
/// the background row. Classes are the sorted union of ids seen.
ConfusionMatrix confusion_from_detections(std::span<const ScoredPrediction> preds,
                                          std::span<const GroundTruth> truths,
                                          double iou_threshold = 0.5);

}  // namespace trapwatch::eval
