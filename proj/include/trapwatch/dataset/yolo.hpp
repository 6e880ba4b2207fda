#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "trapwatch/core/box.hpp"
#include "trapwatch/core/catalog.hpp"
#include "trapwatch/dataset/voc.hpp"

namespace trapwatch::dataset {

/// One normalized label row: centre, width and height in [0,1].
struct YoloRow {
  int class_id = 0;
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

struct YoloLabelFile {
  std::string image_stem;
  std::vector<YoloRow> rows;

  /// `class cx cy w h`, six decimals, one newline-terminated row each.
  std::string to_text() const;
};

/// Throws Errc::invalid_label when a row breaks the normalized invariants.
void validate(const YoloRow& row);

std::string format_row(const YoloRow& row);
YoloRow parse_row(std::string_view line);
YoloLabelFile parse_label_file(std::string_view image_stem, std::string_view text);

/// Errors: excluded_document, unknown_class.
YoloLabelFile voc_to_yolo(const VocDocument& doc, const SpeciesCatalog& catalog);

/// Inverse of the normalization, in original-image pixels.
BoundingBox yolo_to_box(const YoloRow& row, int width, int height);

std::string image_stem(std::string_view filename);

}  // namespace trapwatch::dataset
