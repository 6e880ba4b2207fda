#include "trapwatch/eval/confusion.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "trapwatch/core/error.hpp"

namespace trapwatch::eval {

ConfusionMatrix::ConfusionMatrix(std::vector<int> classes) : classes_(std::move(classes)) {
  auto sorted = classes_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(Errc::invalid_argument, "confusion matrix classes must be unique");
  }
  const auto n = classes_.size() + 1;
  cells_.assign(n, std::vector<std::int64_t>(n, 0));
}

ConfusionMatrix ConfusionMatrix::from_counts(std::vector<int> classes,
                                             const std::vector<std::vector<std::int64_t>>& counts) {
  ConfusionMatrix cm(std::move(classes));
  const auto n = cm.classes_.size();
  if (counts.size() != n) {
    throw Error(Errc::invalid_argument, "confusion counts must be square over the class list");
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (counts[a].size() != n) {
      throw Error(Errc::invalid_argument, "confusion counts must be square over the class list");
    }
    for (std::size_t p = 0; p < n; ++p) cm.add(cm.classes_[a], cm.classes_[p], counts[a][p]);
  }
  return cm;
}

bool ConfusionMatrix::has_class(int class_id) const noexcept {
  return std::find(classes_.begin(), classes_.end(), class_id) != classes_.end();
}

std::size_t ConfusionMatrix::index_of(int class_id) const {
  auto it = std::find(classes_.begin(), classes_.end(), class_id);
  if (it == classes_.end()) {
    throw Error(Errc::unknown_class, fmt::format("class {} is not in the matrix", class_id));
  }
  return static_cast<std::size_t>(it - classes_.begin());
}

void ConfusionMatrix::add(std::optional<int> actual, std::optional<int> predicted,
                          std::int64_t n) {
  if (n < 0) throw Error(Errc::invalid_argument, "confusion counts must be non-negative");
  if (!actual && !predicted) {
    throw Error(Errc::invalid_argument, "background/background is not a confusion cell");
  }
  const auto bg = classes_.size();
  const auto a = actual ? index_of(*actual) : bg;
  const auto p = predicted ? index_of(*predicted) : bg;
  cells_[a][p] += n;
  total_ += n;
  if (a == bg || p == bg) background_total_ += n;
}

std::int64_t ConfusionMatrix::count(int actual, int predicted) const {
  return cells_[index_of(actual)][index_of(predicted)];
}

std::int64_t ConfusionMatrix::background_row(int predicted) const {
  return cells_[classes_.size()][index_of(predicted)];
}

std::int64_t ConfusionMatrix::background_column(int actual) const {
  return cells_[index_of(actual)][classes_.size()];
}

std::int64_t ConfusionMatrix::row_total(int actual) const {
  const auto& row = cells_[index_of(actual)];
  std::int64_t sum = 0;
  for (auto v : row) sum += v;
  return sum;
}

std::int64_t ConfusionMatrix::column_total(int predicted) const {
  const auto p = index_of(predicted);
  std::int64_t sum = 0;
  for (const auto& row : cells_) sum += row[p];
  return sum;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < classes_.size(); ++i) sum += cells_[i][i];
  return sum;
}

ConfusionMatrix confusion_from_detections(std::span<const ScoredPrediction> preds,
                                          std::span<const GroundTruth> truths,
                                          double iou_threshold) {
  std::set<int> ids;
  for (const auto& p : preds) ids.insert(p.class_id);
  for (const auto& t : truths) ids.insert(t.class_id);
  ConfusionMatrix cm(std::vector<int>(ids.begin(), ids.end()));

  const auto match = match_detections(preds, truths, iou_threshold, ClassPolicy::class_agnostic);
  for (std::size_t p = 0; p < preds.size(); ++p) {
    if (auto t = match.pred_to_truth[p]) {
      cm.add(truths[*t].class_id, preds[p].class_id);
    } else {
      cm.add(std::nullopt, preds[p].class_id);
    }
  }
  for (std::size_t t = 0; t < truths.size(); ++t) {
    if (!match.truth_to_pred[t]) cm.add(truths[t].class_id, std::nullopt);
  }
  return cm;
}

}  // namespace trapwatch::eval
