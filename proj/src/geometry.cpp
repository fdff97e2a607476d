#include "mrnav/geometry.hpp"

#include <algorithm>
#include <numbers>

namespace mrnav {

double point_segment_distance(Vec2 p, const Segment& s) {
  const Vec2 ab = s.b - s.a;
  const double len2 = ab.squared_norm();
  double t = len2 > 0.0 ? dot(p - s.a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (s.a + ab * t)).norm();
}

std::optional<double> ray_segment_hit(Vec2 origin, Vec2 dir, const Segment& s) {
  const Vec2 edge = s.b - s.a;
  const double denom = cross(dir, edge);
  if (std::abs(denom) < 1e-15) return std::nullopt;
  const Vec2 ao = s.a - origin;
  const double t = cross(ao, edge) / denom;
  const double u = cross(ao, dir) / denom;
  if (t <= 0.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return t;
}

std::optional<double> ray_circle_hit(Vec2 origin, Vec2 dir, Vec2 center, double radius) {
  // |origin + t dir - center|^2 = r^2 with |dir| = 1
  const Vec2 oc = origin - center;
  const double b = dot(oc, dir);
  const double c = oc.squared_norm() - radius * radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  // Numerically stable pair of roots.
  const double q = b > 0.0 ? -(b + root) : -b + root;
  double t0 = q;
  double t1 = q != 0.0 ? c / q : 0.0;
  if (t0 > t1) std::swap(t0, t1);
  if (t0 > 0.0) return t0;
  if (t1 > 0.0) return t1;
  return std::nullopt;
}

double wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  theta = std::fmod(theta, two_pi);
  if (theta <= -std::numbers::pi) theta += two_pi;
  if (theta > std::numbers::pi) theta -= two_pi;
  return theta;
}

}  // namespace mrnav
