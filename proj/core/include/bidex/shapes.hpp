#pragma once

#include <string>
#include <vector>

#include "bidex/geometry.hpp"
#include "bidex/rng.hpp"

namespace bidex {

/// Parametric stand-ins for scanned object meshes. Canonical frames:
///   box      - axis-aligned, centered at the origin
///   cylinder - axis +z, centered at the origin
///   shell    - hemispherical bowl, sphere center at the origin, surface on
///              the lower hemisphere (rim circle in the z = 0 plane, opening
///              upward)
///   disc     - flat plate in the z = 0 plane, centered at the origin
struct PrimitiveShape {
  enum class Kind { Box, Cylinder, Shell, Disc };

  Kind kind = Kind::Box;
  // Box: size_x/y/z are full extents. Cylinder: radius + size_z as height.
  // Shell and disc: radius only.
  double size_x = 0.1;
  double size_y = 0.1;
  double size_z = 0.1;
  double radius = 0.05;

  static PrimitiveShape box(double sx, double sy, double sz);
  static PrimitiveShape cylinder(double radius, double height);
  static PrimitiveShape shell(double radius);
  static PrimitiveShape disc(double radius);

  /// Tag used in demo files: "box" | "cylinder" | "shell" | "disc".
  std::string kind_name() const;
  static Kind parse_kind(const std::string& name);

  /// Distance from the canonical origin down to the lowest surface point.
  double bottom_offset() const;
  /// Height of the highest surface point above the canonical origin.
  double top_offset() const;
};

/// n points on the surface, area-uniform in expectation, canonical frame.
std::vector<Vec3> sample_surface_points(const PrimitiveShape& shape,
                                        std::size_t n, RngStream& rng);

}  // namespace bidex
