#pragma once

#include <array>
#include <cmath>

namespace egoplan {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double c) const { return {x * c, y * c}; }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 v) { return std::sqrt(v.x * v.x + v.y * v.y); }

/// Components of `v` along a unit heading `u` and its left normal.
inline Vec2 to_body(Vec2 v, Vec2 u) {
  return {v.x * u.x + v.y * u.y, -v.x * u.y + v.y * u.x};
}

/// Inverse of to_body for the same unit heading.
inline Vec2 from_body(Vec2 v, Vec2 u) {
  return {v.x * u.x - v.y * u.y, v.x * u.y + v.y * u.x};
}

/// Rectangle centered at `center`, long side along the unit `heading`.
struct OrientedRect {
  Vec2 center;
  Vec2 heading{1.0, 0.0};
  double length = 0.0;
  double width = 0.0;

  std::array<Vec2, 4> corners() const;
  bool contains(Vec2 p) const;
};

// Separating-axis test over the four edge normals. Touching rectangles
// count as intersecting.
bool rects_intersect(const OrientedRect& a, const OrientedRect& b);

}  // namespace egoplan
