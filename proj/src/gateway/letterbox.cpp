#include "trapwatch/gateway/letterbox.hpp"

#include <algorithm>
#include <cstdint>

#include <fmt/format.h>

#include "trapwatch/core/error.hpp"

namespace trapwatch::gateway {
namespace {

// round_half_up(extent * target / longest) in integers.
int scaled_extent(int extent, int target, int longest) {
  const std::int64_t num = 2LL * extent * target + longest;
  return std::max(1, static_cast<int>(num / (2LL * longest)));
}

}  // namespace

LetterboxTransform letterbox(int width, int height, int target) {
  if (width < 1 || height < 1 || target < 1) {
    throw Error(Errc::invalid_argument,
                fmt::format("letterbox needs positive sizes, got {}x{} -> {}", width, height, target));
  }
  const int longest = std::max(width, height);
  LetterboxTransform t;
  t.target = target;
  t.source_width = width;
  t.source_height = height;
  t.scale = static_cast<double>(target) / static_cast<double>(longest);
  t.scaled_width = scaled_extent(width, target, longest);
  t.scaled_height = scaled_extent(height, target, longest);
  t.pad_left = (target - t.scaled_width) / 2;
  t.pad_top = (target - t.scaled_height) / 2;
  return t;
}

BoundingBox letterbox_box(const BoundingBox& box, const LetterboxTransform& t) {
  if (box.frame != Frame::original) {
    throw Error(Errc::frame_mismatch, "letterbox_box expects an original-frame box");
  }
  return BoundingBox{box.x_min * t.scale + t.pad_left, box.y_min * t.scale + t.pad_top,
                     box.x_max * t.scale + t.pad_left, box.y_max * t.scale + t.pad_top,
                     Frame::model_input};
}

BoundingBox unletterbox_box(const BoundingBox& box, const LetterboxTransform& t, int orig_w,
                            int orig_h) {
  if (box.frame != Frame::model_input) {
    throw Error(Errc::frame_mismatch, "unletterbox_box expects a model-input box");
  }
  BoundingBox out{(box.x_min - t.pad_left) / t.scale, (box.y_min - t.pad_top) / t.scale,
                  (box.x_max - t.pad_left) / t.scale, (box.y_max - t.pad_top) / t.scale,
                  Frame::original};
  return clamp_box(out, orig_w, orig_h);
}

}  // namespace trapwatch::gateway
