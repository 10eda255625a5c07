#include "bidex/scene.hpp"

namespace bidex {

Vec3 fingertip_offset(std::size_t finger) {
  // Four digits spread around the palm, reaching below the wrist origin.
  static const Vec3 kOffsets[kFingersPerHand] = {
      {0.03, 0.03, -0.06},
      {0.03, -0.03, -0.06},
      {-0.03, 0.03, -0.06},
      {-0.03, -0.03, -0.06},
  };
  return kOffsets[finger];
}

Vec3 fingertip_position(const Pose& wrist, std::size_t finger, double closure) {
  const double scale = 1.0 - 0.5 * closure;
  return transform_point(wrist, fingertip_offset(finger) * scale);
}

}  // namespace bidex
