#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>

namespace mpr::scenario {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double k) const { return {x * k, y * k}; }
  friend Vec2 operator*(double k, Vec2 v) { return v * k; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 normalized(Vec2 a) { return a * (1.0 / norm(a)); }
/// Counter-clockwise perpendicular, i.e. the left normal of a direction.
inline Vec2 leftNormal(Vec2 a) { return {-a.y, a.x}; }

using Quad = std::array<Vec2, 4>;

struct Aabb {
  double minX = std::numeric_limits<double>::infinity();
  double minY = std::numeric_limits<double>::infinity();
  double maxX = -std::numeric_limits<double>::infinity();
  double maxY = -std::numeric_limits<double>::infinity();

  void extend(Vec2 p) {
    minX = std::min(minX, p.x);
    minY = std::min(minY, p.y);
    maxX = std::max(maxX, p.x);
    maxY = std::max(maxY, p.y);
  }
  /// Signed gap between boxes: positive when apart, negative when overlapping.
  double gap(const Aabb& o) const {
    return std::max(std::max(o.minX - maxX, minX - o.maxX), std::max(o.minY - maxY, minY - o.maxY));
  }
};

inline Aabb boundsOf(std::span<const Vec2> pts) {
  Aabb b;
  for (Vec2 p : pts) b.extend(p);
  return b;
}

/// Corners (counter-clockwise) of a length x width rectangle centered at
/// `center` whose length axis points along the unit vector `heading`.
inline Quad orientedBox(Vec2 center, Vec2 heading, double length, double width) {
  const Vec2 f = heading * (0.5 * length);
  const Vec2 l = leftNormal(heading) * (0.5 * width);
  return {center - f - l, center + f - l, center + f + l, center - f + l};
}

/// Separating-axis signed separation of two convex polygons. Positive values
/// mean the polygons are disjoint (the value is the largest gap along any
/// edge normal); zero means touching; negative values are the smallest
/// overlap along the candidate axes, i.e. interiors intersect.
inline double separation(std::span<const Vec2> a, std::span<const Vec2> b) {
  double best = -std::numeric_limits<double>::infinity();
  auto axesOf = [&](std::span<const Vec2> poly) {
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2 edge = poly[(i + 1) % poly.size()] - poly[i];
      const double len = norm(edge);
      if (len <= 0.0) continue;
      const Vec2 axis = leftNormal(edge) * (1.0 / len);
      double aMin = std::numeric_limits<double>::infinity(), aMax = -aMin;
      double bMin = aMin, bMax = -aMin;
      for (Vec2 p : a) {
        const double t = dot(p, axis);
        aMin = std::min(aMin, t);
        aMax = std::max(aMax, t);
      }
      for (Vec2 p : b) {
        const double t = dot(p, axis);
        bMin = std::min(bMin, t);
        bMax = std::max(bMax, t);
      }
      best = std::max(best, std::max(bMin - aMax, aMin - bMax));
    }
  };
  axesOf(a);
  axesOf(b);
  return best;
}

/// Point-in-convex-polygon test including the boundary. The polygon may be
/// in either orientation.
inline bool containsPoint(std::span<const Vec2> poly, Vec2 p, double tol = 1e-12) {
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const double c = cross(poly[(i + 1) % poly.size()] - poly[i], p - poly[i]);
    if (c > tol) pos = true;
    if (c < -tol) neg = true;
    if (pos && neg) return false;
  }
  return true;
}

}  // namespace mpr::scenario
