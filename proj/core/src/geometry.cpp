#include "bidex/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bidex {

namespace {

bool all_finite(double a, double b, double c) {
  return std::isfinite(a) && std::isfinite(b) && std::isfinite(c);
}

}  // namespace

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

bool Vec3::finite() const { return all_finite(x, y, z); }

double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

UnitQuat::UnitQuat(double w_, double x_, double y_, double z_) {
  if (!(std::isfinite(w_) && all_finite(x_, y_, z_))) {
    throw std::invalid_argument("quaternion components must be finite");
  }
  const double n = std::sqrt(w_ * w_ + x_ * x_ + y_ * y_ + z_ * z_);
  if (n < 1e-12) {
    throw std::invalid_argument("quaternion norm too small to normalize");
  }
  w = w_ / n;
  x = x_ / n;
  y = y_ / n;
  z = z_ / n;
}

UnitQuat UnitQuat::from_axis_angle(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  if (!(axis.finite() && std::isfinite(angle_rad)) || n < 1e-12) {
    throw std::invalid_argument("axis-angle inputs must be finite, axis nonzero");
  }
  const double h = 0.5 * angle_rad;
  const double s = std::sin(h) / n;
  return UnitQuat(std::cos(h), axis.x * s, axis.y * s, axis.z * s);
}

UnitQuat UnitQuat::from_rotvec(const Vec3& rv) {
  if (!rv.finite()) {
    throw std::invalid_argument("rotation vector must be finite");
  }
  const double angle = rv.norm();
  if (angle < 1e-12) {
    // First-order expansion keeps the map smooth through zero.
    UnitQuat q;
    q.w = 1.0;
    q.x = 0.5 * rv.x;
    q.y = 0.5 * rv.y;
    q.z = 0.5 * rv.z;
    const double n = std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
    q.w /= n;
    q.x /= n;
    q.y /= n;
    q.z /= n;
    return q;
  }
  return from_axis_angle(rv, angle);
}

Vec3 UnitQuat::rotate(const Vec3& p) const {
  // q * (0, p) * conj(q), expanded.
  const Vec3 u{x, y, z};
  const Vec3 t = Vec3{u.y * p.z - u.z * p.y, u.z * p.x - u.x * p.z,
                      u.x * p.y - u.y * p.x} *
                 2.0;
  return p + t * w +
         Vec3{u.y * t.z - u.z * t.y, u.z * t.x - u.x * t.z,
              u.x * t.y - u.y * t.x};
}

Vec3 UnitQuat::to_rotvec() const {
  double qw = w, qx = x, qy = y, qz = z;
  if (qw < 0.0) {  // canonical sign, shortest arc
    qw = -qw;
    qx = -qx;
    qy = -qy;
    qz = -qz;
  }
  const double sin_half = std::sqrt(qx * qx + qy * qy + qz * qz);
  if (sin_half < 1e-12) {
    return Vec3{2.0 * qx, 2.0 * qy, 2.0 * qz};
  }
  const double angle = 2.0 * std::atan2(sin_half, qw);
  const double s = angle / sin_half;
  return Vec3{qx * s, qy * s, qz * s};
}

bool UnitQuat::finite() const {
  return std::isfinite(w) && all_finite(x, y, z);
}

namespace {

void require_unit(const UnitQuat& q, const char* what) {
  if (!q.finite()) {
    throw std::invalid_argument(std::string(what) + ": non-finite quaternion");
  }
  const double n2 = q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z;
  if (std::abs(n2 - 1.0) > 2e-6) {
    throw std::invalid_argument(std::string(what) + ": quaternion not unit norm");
  }
}

}  // namespace

UnitQuat quat_mul(const UnitQuat& a, const UnitQuat& b) {
  require_unit(a, "quat_mul");
  require_unit(b, "quat_mul");
  return UnitQuat(a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
                  a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
                  a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
                  a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w);
}

double quat_dist(const UnitQuat& a, const UnitQuat& b) {
  require_unit(a, "quat_dist");
  require_unit(b, "quat_dist");
  const double d = std::min(1.0, std::abs(a.dot(b)));
  return 2.0 * std::acos(d);
}

Pose Pose::compose(const Pose& o) const {
  return {position + orientation.rotate(o.position),
          quat_mul(orientation, o.orientation)};
}

Pose Pose::inverse() const {
  const UnitQuat qi = orientation.conjugate();
  return {qi.rotate(position * -1.0), qi};
}

bool Pose::finite() const {
  return position.finite() && orientation.finite();
}

Vec3 transform_point(const Pose& pose, const Vec3& p) {
  if (!pose.finite() || !p.finite()) {
    throw std::invalid_argument("transform_point: non-finite input");
  }
  return pose.position + pose.orientation.rotate(p);
}

std::vector<std::size_t> nearest_neighbors(const std::vector<Vec3>& points,
                                           const Vec3& anchor, std::size_t L) {
  if (L < 1 || L > points.size()) {
    throw std::invalid_argument("nearest_neighbors: L out of range");
  }
  std::vector<std::size_t> idx(points.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 diff = points[i] - anchor;
    d2[i] = diff.dot(diff);
  }
  auto cmp = [&](std::size_t a, std::size_t b) {
    if (d2[a] != d2[b]) return d2[a] < d2[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(L),
                    idx.end(), cmp);
  idx.resize(L);
  return idx;
}

Vec3 centroid(const std::vector<Vec3>& points) {
  Vec3 c;
  for (const Vec3& p : points) c += p;
  const double n = points.empty() ? 1.0 : static_cast<double>(points.size());
  return c * (1.0 / n);
}

}  // namespace bidex
