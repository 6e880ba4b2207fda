#pragma once

#include "trapwatch/core/box.hpp"

namespace trapwatch::eval {

/// Intersection over union in [0,1]. Throws Errc::frame_mismatch when the
/// boxes are in different frames.
double iou(const BoundingBox& a, const BoundingBox& b);

}  // namespace trapwatch::eval
