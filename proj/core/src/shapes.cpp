#include "bidex/shapes.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bidex {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

PrimitiveShape PrimitiveShape::box(double sx, double sy, double sz) {
  PrimitiveShape s;
  s.kind = Kind::Box;
  s.size_x = sx;
  s.size_y = sy;
  s.size_z = sz;
  return s;
}

PrimitiveShape PrimitiveShape::cylinder(double radius, double height) {
  PrimitiveShape s;
  s.kind = Kind::Cylinder;
  s.radius = radius;
  s.size_z = height;
  return s;
}

PrimitiveShape PrimitiveShape::shell(double radius) {
  PrimitiveShape s;
  s.kind = Kind::Shell;
  s.radius = radius;
  return s;
}

PrimitiveShape PrimitiveShape::disc(double radius) {
  PrimitiveShape s;
  s.kind = Kind::Disc;
  s.radius = radius;
  return s;
}

std::string PrimitiveShape::kind_name() const {
  switch (kind) {
    case Kind::Box: return "box";
    case Kind::Cylinder: return "cylinder";
    case Kind::Shell: return "shell";
    case Kind::Disc: return "disc";
  }
  return "box";
}

PrimitiveShape::Kind PrimitiveShape::parse_kind(const std::string& name) {
  if (name == "box") return Kind::Box;
  if (name == "cylinder") return Kind::Cylinder;
  if (name == "shell") return Kind::Shell;
  if (name == "disc") return Kind::Disc;
  throw std::invalid_argument("unknown shape kind: " + name);
}

double PrimitiveShape::bottom_offset() const {
  switch (kind) {
    case Kind::Box: return 0.5 * size_z;
    case Kind::Cylinder: return 0.5 * size_z;
    case Kind::Shell: return radius;
    case Kind::Disc: return 0.0;
  }
  return 0.0;
}

double PrimitiveShape::top_offset() const {
  switch (kind) {
    case Kind::Box: return 0.5 * size_z;
    case Kind::Cylinder: return 0.5 * size_z;
    case Kind::Shell: return 0.0;
    case Kind::Disc: return 0.0;
  }
  return 0.0;
}

namespace {

Vec3 sample_box(const PrimitiveShape& s, RngStream& rng) {
  const double hx = 0.5 * s.size_x, hy = 0.5 * s.size_y, hz = 0.5 * s.size_z;
  const double ax = s.size_y * s.size_z;  // +-x faces
  const double ay = s.size_x * s.size_z;  // +-y faces
  const double az = s.size_x * s.size_y;  // +-z faces
  const double total = 2.0 * (ax + ay + az);
  double pick = rng.next_double() * total;
  const double u = rng.uniform(-1.0, 1.0);
  const double v = rng.uniform(-1.0, 1.0);
  if (pick < ax) return {hx, u * hy, v * hz};
  pick -= ax;
  if (pick < ax) return {-hx, u * hy, v * hz};
  pick -= ax;
  if (pick < ay) return {u * hx, hy, v * hz};
  pick -= ay;
  if (pick < ay) return {u * hx, -hy, v * hz};
  pick -= ay;
  if (pick < az) return {u * hx, v * hy, hz};
  return {u * hx, v * hy, -hz};
}

Vec3 sample_cylinder(const PrimitiveShape& s, RngStream& rng) {
  const double r = s.radius;
  const double h = s.size_z;
  const double lateral = kTwoPi * r * h;
  const double cap = std::numbers::pi * r * r;
  double pick = rng.next_double() * (lateral + 2.0 * cap);
  const double phi = rng.uniform(0.0, kTwoPi);
  if (pick < lateral) {
    const double z = rng.uniform(-0.5 * h, 0.5 * h);
    return {r * std::cos(phi), r * std::sin(phi), z};
  }
  const double rr = r * std::sqrt(rng.next_double());
  const double z = (pick < lateral + cap) ? 0.5 * h : -0.5 * h;
  return {rr * std::cos(phi), rr * std::sin(phi), z};
}

Vec3 sample_shell(const PrimitiveShape& s, RngStream& rng) {
  // Sphere area element is uniform in z; restrict to the lower hemisphere.
  const double z = rng.uniform(-s.radius, 0.0);
  const double phi = rng.uniform(0.0, kTwoPi);
  const double rho = std::sqrt(std::max(0.0, s.radius * s.radius - z * z));
  return {rho * std::cos(phi), rho * std::sin(phi), z};
}

Vec3 sample_disc(const PrimitiveShape& s, RngStream& rng) {
  const double rr = s.radius * std::sqrt(rng.next_double());
  const double phi = rng.uniform(0.0, kTwoPi);
  return {rr * std::cos(phi), rr * std::sin(phi), 0.0};
}

}  // namespace

std::vector<Vec3> sample_surface_points(const PrimitiveShape& shape,
                                        std::size_t n, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("sample_surface_points: n must be >= 1");
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (shape.kind) {
      case PrimitiveShape::Kind::Box:
        pts.push_back(sample_box(shape, rng));
        break;
      case PrimitiveShape::Kind::Cylinder:
        pts.push_back(sample_cylinder(shape, rng));
        break;
      case PrimitiveShape::Kind::Shell:
        pts.push_back(sample_shell(shape, rng));
        break;
      case PrimitiveShape::Kind::Disc:
        pts.push_back(sample_disc(shape, rng));
        break;
    }
  }
  return pts;
}

}  // namespace bidex
