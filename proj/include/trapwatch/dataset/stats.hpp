#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>

#include "trapwatch/core/catalog.hpp"
#include "trapwatch/dataset/voc.hpp"

namespace trapwatch::dataset {

struct DatasetStats {
  std::map<int, std::size_t> per_class_counts;
  std::map<std::pair<int, int>, std::size_t> resolution_histogram;  // (w,h) -> images
  std::pair<double, double> mean_resolution{0.0, 0.0};
  std::size_t total_images = 0;
  std::size_t total_objects = 0;
  /// Not part of any total.
  std::size_t excluded_images = 0;
  std::map<std::string, std::size_t> unknown_labels;
};

DatasetStats compute_stats(std::span<const VocDocument> docs, const SpeciesCatalog& catalog);

/// Tab-separated report: summary, per-class counts, resolution histogram.
std::string format_stats(const DatasetStats& stats, const SpeciesCatalog& catalog);

}  // namespace trapwatch::dataset
