#pragma once

#include <string_view>

namespace trapwatch {

/// Coordinate frame a box is expressed in.
enum class Frame {
  original,     // pixels of the image as received
  model_input,  // pixels of the letterboxed square model input
  normalized,   // unit square, [0,1] on both axes
};

std::string_view to_string(Frame frame) noexcept;

/// Axis-aligned rectangle with continuous corner coordinates.
///
/// The type itself does not enforce x_min < x_max; use validate() at the
/// boundaries where a box enters the system.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
  Frame frame = Frame::original;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  double area() const noexcept {
    return width() > 0.0 && height() > 0.0 ? width() * height() : 0.0;
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Throws Errc::degenerate_box when the box has no interior (or a normalized
/// box leaves the unit square).
void validate(const BoundingBox& box);

/// Clip into [0,width]x[0,height]. Throws Errc::degenerate_box if nothing is
/// left.
BoundingBox clamp_box(const BoundingBox& box, double width, double height);

}  // namespace trapwatch
