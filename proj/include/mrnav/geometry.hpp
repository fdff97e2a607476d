#pragma once

#include <cmath>
#include <optional>

namespace mrnav {

// Plane vector in meters.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2() = default;
  constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr bool operator==(const Vec2&) const = default;

  double norm() const { return std::hypot(x, y); }
  constexpr double squared_norm() const { return x * x + y * y; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

constexpr Vec2 operator*(double s, Vec2 v) { return v * s; }
constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
// z-component of the 3D cross product.
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

inline Vec2 unit_from_angle(double theta) { return {std::cos(theta), std::sin(theta)}; }

// Rotates v by -theta, i.e. expresses a world-frame vector in a frame whose x-axis
// points along heading theta.
inline Vec2 to_body_frame(Vec2 v, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * v.x + s * v.y, -s * v.x + c * v.y};
}

struct Segment {
  Vec2 a;
  Vec2 b;
  bool operator==(const Segment&) const = default;
  double length() const { return (b - a).norm(); }
};

double point_segment_distance(Vec2 p, const Segment& s);

// Ray parameter t > 0 where origin + t*dir meets the segment. Parallel rays miss.
std::optional<double> ray_segment_hit(Vec2 origin, Vec2 dir, const Segment& s);

// Smallest t > 0 where origin + t*dir meets the circle boundary.
std::optional<double> ray_circle_hit(Vec2 origin, Vec2 dir, Vec2 center, double radius);

// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

}  // namespace mrnav
