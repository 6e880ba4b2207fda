#include "trapwatch/core/box.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "trapwatch/core/error.hpp"

namespace trapwatch {

std::string_view to_string(Frame frame) noexcept {
  switch (frame) {
    case Frame::original: return "original";
    case Frame::model_input: return "model_input";
    case Frame::normalized: return "normalized";
  }
  return "original";
}

void validate(const BoundingBox& box) {
  const bool finite = std::isfinite(box.x_min) && std::isfinite(box.y_min) &&
                      std::isfinite(box.x_max) && std::isfinite(box.y_max);
  if (!finite || !(box.x_min < box.x_max) || !(box.y_min < box.y_max)) {
    throw Error(Errc::degenerate_box,
                fmt::format("box ({}, {}, {}, {}) has no interior", box.x_min,
                            box.y_min, box.x_max, box.y_max));
  }
  if (box.frame == Frame::normalized &&
      (box.x_min < 0.0 || box.y_min < 0.0 || box.x_max > 1.0 || box.y_max > 1.0)) {
    throw Error(Errc::degenerate_box, "normalized box leaves the unit square");
  }
}

BoundingBox clamp_box(const BoundingBox& box, double width, double height) {
  if (!(width >= 1.0) || !(height >= 1.0)) {
    throw Error(Errc::invalid_argument, "clamp_box: image extent must be >= 1");
  }
  BoundingBox out = box;
  out.x_min = std::clamp(box.x_min, 0.0, width);
  out.x_max = std::clamp(box.x_max, 0.0, width);
  out.y_min = std::clamp(box.y_min, 0.0, height);
  out.y_max = std::clamp(box.y_max, 0.0, height);
  if (!(out.x_min < out.x_max) || !(out.y_min < out.y_max)) {
    throw Error(Errc::degenerate_box,
                fmt::format("box ({}, {}, {}, {}) is empty inside {}x{}", box.x_min,
                            box.y_min, box.x_max, box.y_max, width, height));
  }
  return out;
}

}  // namespace trapwatch
