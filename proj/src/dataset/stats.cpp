#include "trapwatch/dataset/stats.hpp"

#include <fmt/format.h>

#include "trapwatch/core/error.hpp"

namespace trapwatch::dataset {

DatasetStats compute_stats(std::span<const VocDocument> docs, const SpeciesCatalog& catalog) {
  DatasetStats stats;
  double sum_w = 0.0;
  double sum_h = 0.0;
  for (const auto& doc : docs) {
    if (doc.excluded) {
      ++stats.excluded_images;
      continue;
    }
    ++stats.total_images;
    ++stats.resolution_histogram[{doc.image_width, doc.image_height}];
    sum_w += doc.image_width;
    sum_h += doc.image_height;
    for (const auto& obj : doc.objects) {
      try {
        ++stats.per_class_counts[catalog.lookup(obj.name)];
        ++stats.total_objects;
      } catch (const Error&) {
        ++stats.unknown_labels[obj.name];
      }
    }
  }
  if (stats.total_images > 0) {
    const auto n = static_cast<double>(stats.total_images);
    stats.mean_resolution = {sum_w / n, sum_h / n};
  }
  return stats;
}

std::string format_stats(const DatasetStats& stats, const SpeciesCatalog& catalog) {
  std::string out;
  out += "metric\tvalue\n";
  out += fmt::format("total_images\t{}\n", stats.total_images);
  out += fmt::format("total_objects\t{}\n", stats.total_objects);
  out += fmt::format("excluded_images\t{}\n", stats.excluded_images);
  out += fmt::format("mean_width\t{:.2f}\n", stats.mean_resolution.first);
  out += fmt::format("mean_height\t{:.2f}\n", stats.mean_resolution.second);
  out += "\nclass_id\tname\tcount\n";
  for (const auto& [id, count] : stats.per_class_counts) {
    out += fmt::format("{}\t{}\t{}\n", id, catalog.at(id).scientific_name, count);
  }
  if (!stats.unknown_labels.empty()) {
    out += "\nunknown_label\tcount\n";
    for (const auto& [name, count] : stats.unknown_labels) {
      out += fmt::format("{}\t{}\n", name, count);
    }
  }
  out += "\nwidth\theight\timages\n";
  for (const auto& [res, count] : stats.resolution_histogram) {
    out += fmt::format("{}\t{}\t{}\n", res.first, res.second, count);
  }
  return out;
}

}  // namespace trapwatch::dataset
