#pragma once

#include "trapwatch/core/box.hpp"

namespace trapwatch::gateway {

inline constexpr int kDefaultTarget = 640;

/// Aspect-preserving resize of a width x height image into a target x target
/// square, centred with padding.
struct LetterboxTransform {
  double scale = 1.0;
  int pad_left = 0;
  int pad_top = 0;
  int scaled_width = 0;
  int scaled_height = 0;
  int target = kDefaultTarget;
  int source_width = 0;
  int source_height = 0;

  int pad_right() const noexcept { return target - scaled_width - pad_left; }
  int pad_bottom() const noexcept { return target - scaled_height - pad_top; }
};

/// Throws Errc::invalid_argument unless width, height and target are >= 1.
LetterboxTransform letterbox(int width, int height, int target = kDefaultTarget);

/// Original-image box into the model-input frame (no clamping).
BoundingBox letterbox_box(const BoundingBox& box, const LetterboxTransform& t);

/// Model-input box back to the original image, clamped to its bounds.
/// Throws Errc::degenerate_box if nothing is left (e.g. a box inside the
/// padding) and Errc::frame_mismatch for a non model-input box.
BoundingBox unletterbox_box(const BoundingBox& box, const LetterboxTransform& t, int orig_w,
                            int orig_h);

}  // namespace trapwatch::gateway
