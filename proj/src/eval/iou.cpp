#include "trapwatch/eval/iou.hpp"

#include <algorithm>

#include "trapwatch/core/error.hpp"

namespace trapwatch::eval {

double iou(const BoundingBox& a, const BoundingBox& b) {
  if (a.frame != b.frame) {
    throw Error(Errc::frame_mismatch, "iou: boxes are in different frames");
  }
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

}  // namespace trapwatch::eval
