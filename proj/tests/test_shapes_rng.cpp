#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "bidex/rng.hpp"
#include "bidex/shapes.hpp"

using namespace bidex;

TEST_CASE("rng streams replay byte-identically") {
  RngStream a(123, 7);
  RngStream b(123, 7);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  // Gaussian draws replay as well and leave the counter in the same place.
  RngStream c(9, 1), d(9, 1);
  for (int i = 0; i < 100; ++i) {
    CHECK(c.next_gaussian() == d.next_gaussian());
  }
  CHECK(c.counter() == d.counter());
}

TEST_CASE("rng streams with different ids are distinct") {
  RngStream a(1, 0), b(1, 1);
  int same = 0;
  for (int i = 0; i < 64; ++i) {
    if (a.next_u64() == b.next_u64()) ++same;
  }
  CHECK(same == 0);
}

TEST_CASE("next_below stays in range and covers values") {
  RngStream rng(2024, 3);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const std::uint64_t v = rng.next_below(7);
    REQUIRE(v < 7);
    counts[static_cast<int>(v)] += 1;
  }
  for (int c : counts) CHECK(c > 800);
  CHECK_THROWS_AS(rng.next_below(0), std::invalid_argument);
}

TEST_CASE("gaussian moments are sane") {
  RngStream rng(55, 0);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.next_gaussian();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("box samples lie on the surface") {
  RngStream rng(1, 0);
  const PrimitiveShape box = PrimitiveShape::box(1.0, 1.0, 1.0);
  const auto pts = sample_surface_points(box, 4096, rng);
  for (const Vec3& p : pts) {
    const double m =
        std::max({std::abs(p.x), std::abs(p.y), std::abs(p.z)});
    CHECK(m == doctest::Approx(0.5).epsilon(1e-9));
  }
}

TEST_CASE("disc samples are flat and inside the radius") {
  RngStream rng(2, 0);
  const double r = 0.09;
  const auto pts = sample_surface_points(PrimitiveShape::disc(r), 2048, rng);
  for (const Vec3& p : pts) {
    CHECK(std::abs(p.z) <= 1e-9);
    CHECK(std::hypot(p.x, p.y) <= r + 1e-12);
  }
}

TEST_CASE("shell samples sit on the lower hemisphere") {
  RngStream rng(3, 0);
  const double r = 0.07;
  const auto pts = sample_surface_points(PrimitiveShape::shell(r), 2048, rng);
  for (const Vec3& p : pts) {
    CHECK(p.norm() == doctest::Approx(r).epsilon(1e-9));
    CHECK(p.z <= 1e-12);
  }
}

TEST_CASE("cylinder samples sit on the lateral surface or caps") {
  RngStream rng(4, 0);
  const double r = 0.03, h = 0.12;
  const auto pts =
      sample_surface_points(PrimitiveShape::cylinder(r, h), 2048, rng);
  for (const Vec3& p : pts) {
    const double rho = std::hypot(p.x, p.y);
    const bool lateral = std::abs(rho - r) < 1e-9;
    const bool cap = std::abs(std::abs(p.z) - 0.5 * h) < 1e-9 && rho <= r + 1e-9;
    CHECK((lateral || cap));
    CHECK(std::abs(p.z) <= 0.5 * h + 1e-12);
  }
}

TEST_CASE("box face occupancy follows the area fractions") {
  // Unequal box: faces have areas proportional to their side products.
  const double sx = 0.2, sy = 0.1, sz = 0.05;
  const PrimitiveShape box = PrimitiveShape::box(sx, sy, sz);
  RngStream rng(99, 0);
  const std::size_t n = 100000;
  const auto pts = sample_surface_points(box, n, rng);
  std::size_t on_x = 0, on_y = 0, on_z = 0;
  for (const Vec3& p : pts) {
    if (std::abs(std::abs(p.x) - sx / 2) < 1e-12) {
      ++on_x;
    } else if (std::abs(std::abs(p.y) - sy / 2) < 1e-12) {
      ++on_y;
    } else {
      ++on_z;
    }
  }
  const double total = 2 * (sy * sz + sx * sz + sx * sy);
  auto check_fraction = [&](std::size_t count, double area) {
    const double expected = 2 * area / total;
    const double sigma = std::sqrt(expected * (1 - expected) /
                                   static_cast<double>(n));
    CHECK(std::abs(static_cast<double>(count) / n - expected) <= 3 * sigma);
  };
  check_fraction(on_x, sy * sz);
  check_fraction(on_y, sx * sz);
  check_fraction(on_z, sx * sy);
}

TEST_CASE("unknown shape kind is rejected") {
  CHECK_THROWS_AS(PrimitiveShape::parse_kind("torus"), std::invalid_argument);
}

TEST_CASE("sampling is reproducible for equal seeds") {
  RngStream a(77, 5), b(77, 5);
  const PrimitiveShape shell = PrimitiveShape::shell(0.06);
  const auto pa = sample_surface_points(shell, 512, a);
  const auto pb = sample_surface_points(shell, 512, b);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].x == pb[i].x);
    CHECK(pa[i].y == pb[i].y);
    CHECK(pa[i].z == pb[i].z);
  }
}
