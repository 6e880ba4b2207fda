#include "trapwatch/dataset/yolo.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "trapwatch/core/error.hpp"

namespace trapwatch::dataset {

void validate(const YoloRow& row) {
  auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  if (row.class_id < 0 || !in_unit(row.cx) || !in_unit(row.cy) || !(row.w > 0.0) ||
      !(row.w <= 1.0) || !(row.h > 0.0) || !(row.h <= 1.0)) {
    throw Error(Errc::invalid_label, fmt::format("label row '{}' breaks the normalized bounds",
                                                 format_row(row)));
  }
}

std::string format_row(const YoloRow& row) {
  return fmt::format("{} {:.6f} {:.6f} {:.6f} {:.6f}", row.class_id, row.cx, row.cy, row.w,
                     row.h);
}

std::string YoloLabelFile::to_text() const {
  std::string out;
  for (const auto& r : rows) {
    out += format_row(r);
    out += '\n';
  }
  return out;
}

YoloRow parse_row(std::string_view line) {
  std::istringstream in{std::string(line)};
  YoloRow row;
  std::string extra;
  if (!(in >> row.class_id >> row.cx >> row.cy >> row.w >> row.h) || (in >> extra)) {
    throw Error(Errc::invalid_label, fmt::format("cannot parse label row '{}'", line));
  }
  validate(row);
  return row;
}

YoloLabelFile parse_label_file(std::string_view image_stem, std::string_view text) {
  YoloLabelFile file{std::string(image_stem), {}};
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos
                                                                 : nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) {
      file.rows.push_back(parse_row(line));
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return file;
}

YoloLabelFile voc_to_yolo(const VocDocument& doc, const SpeciesCatalog& catalog) {
  if (doc.excluded) {
    throw Error(Errc::excluded_document,
                fmt::format("'{}' is marked no good", doc.image_filename));
  }
  const double W = doc.image_width;
  const double H = doc.image_height;
  YoloLabelFile out{image_stem(doc.image_filename), {}};
  out.rows.reserve(doc.objects.size());
  for (const auto& obj : doc.objects) {
    YoloRow row;
    row.class_id = catalog.lookup(obj.name);
    row.cx = (obj.box.x_min + obj.box.x_max) / (2.0 * W);
    row.cy = (obj.box.y_min + obj.box.y_max) / (2.0 * H);
    row.w = (obj.box.x_max - obj.box.x_min) / W;
    row.h = (obj.box.y_max - obj.box.y_min) / H;
    validate(row);
    out.rows.push_back(row);
  }
  return out;
}

BoundingBox yolo_to_box(const YoloRow& row, int width, int height) {
  validate(row);
  if (width < 1 || height < 1) {
    throw Error(Errc::invalid_argument, "yolo_to_box: image extent must be >= 1");
  }
  const double W = width;
  const double H = height;
  return BoundingBox{(row.cx - row.w / 2.0) * W, (row.cy - row.h / 2.0) * H,
                     (row.cx + row.w / 2.0) * W, (row.cy + row.h / 2.0) * H, Frame::original};
}

std::string image_stem(std::string_view filename) {
  auto slash = filename.find_last_of("/\\");
  if (slash != std::string_view::npos) filename.remove_prefix(slash + 1);
  auto dot = filename.rfind('.');
  if (dot != std::string_view::npos && dot > 0) filename = filename.substr(0, dot);
  return std::string(filename);
}

}  // namespace trapwatch::dataset
