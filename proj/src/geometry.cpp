#include "egoplan/geometry.hpp"

#include <algorithm>

namespace egoplan {

std::array<Vec2, 4> OrientedRect::corners() const {
  const Vec2 fwd = heading * (length * 0.5);
  const Vec2 side = Vec2{-heading.y, heading.x} * (width * 0.5);
  return {center + fwd + side, center + fwd - side, center - fwd - side,
          center - fwd + side};
}

bool OrientedRect::contains(Vec2 p) const {
  const Vec2 b = to_body(p - center, heading);
  return std::abs(b.x) <= length * 0.5 && std::abs(b.y) <= width * 0.5;
}

namespace {

// Projects both corner sets onto `axis`; true if the intervals are disjoint.
bool separated_on(Vec2 axis, const std::array<Vec2, 4>& ca,
                  const std::array<Vec2, 4>& cb) {
  double amin = dot(ca[0], axis), amax = amin;
  for (int i = 1; i < 4; ++i) {
    const double t = dot(ca[i], axis);
    amin = std::min(amin, t);
    amax = std::max(amax, t);
  }
  double bmin = dot(cb[0], axis), bmax = bmin;
  for (int i = 1; i < 4; ++i) {
    const double t = dot(cb[i], axis);
    bmin = std::min(bmin, t);
    bmax = std::max(bmax, t);
  }
  return amax < bmin || bmax < amin;
}

}  // namespace

bool rects_intersect(const OrientedRect& a, const OrientedRect& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const Vec2 axes[4] = {a.heading,
                        {-a.heading.y, a.heading.x},
                        b.heading,
                        {-b.heading.y, b.heading.x}};
  for (const Vec2& axis : axes) {
    if (separated_on(axis, ca, cb)) return false;
  }
  return true;
}

}  // namespace egoplan
