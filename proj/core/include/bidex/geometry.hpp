#pragma once

#include <cstddef>
#include <vector>

namespace bidex {

/// 3-vector in meters (or unitless where the caller says so). All components
/// are expected to stay finite; operations that consume external data check.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const;
  bool finite() const;
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

double distance(const Vec3& a, const Vec3& b);

/// Unit quaternion, w-first, Hamilton convention. Every constructor and
/// operation renormalizes, so the norm stays within 1e-9 of one.
struct UnitQuat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  UnitQuat() = default;
  /// Normalizes; throws std::invalid_argument on non-finite or zero input.
  UnitQuat(double w_, double x_, double y_, double z_);

  static UnitQuat identity() { return UnitQuat(); }
  static UnitQuat from_axis_angle(const Vec3& axis, double angle_rad);
  /// Rotation vector: direction = axis, magnitude = angle in radians.
  static UnitQuat from_rotvec(const Vec3& rv);

  UnitQuat conjugate() const { return UnitQuat(w, -x, -y, -z); }
  double dot(const UnitQuat& o) const {
    return w * o.w + x * o.x + y * o.y + z * o.z;
  }
  Vec3 rotate(const Vec3& p) const;
  /// Shortest-arc rotation vector (w canonicalized non-negative first).
  Vec3 to_rotvec() const;
  bool finite() const;
};

/// Hamilton product, renormalized. Inputs must be unit within 1e-6.
UnitQuat quat_mul(const UnitQuat& a, const UnitQuat& b);

/// Geodesic angle 2*acos(|<a,b>|) in radians; symmetric, double-cover safe,
/// range [0, pi].
double quat_dist(const UnitQuat& a, const UnitQuat& b);

/// Rigid transform: rotation followed by translation.
struct Pose {
  Vec3 position;
  UnitQuat orientation;

  static Pose identity() { return {}; }

  /// this * other (apply other in this frame).
  Pose compose(const Pose& o) const;
  Pose inverse() const;
  bool finite() const;
};

Vec3 transform_point(const Pose& pose, const Vec3& p);

/// Indices of the L points closest to anchor, distance ascending, ties broken
/// by smaller index. Throws std::invalid_argument when L is 0 or exceeds the
/// point count.
std::vector<std::size_t> nearest_neighbors(const std::vector<Vec3>& points,
                                           const Vec3& anchor, std::size_t L);

Vec3 centroid(const std::vector<Vec3>& points);

}  // namespace bidex
