#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mpr/error.hpp"
#include "mpr/scenario/geometry.hpp"

namespace mpr::scenario {

struct CurvilinearPoint {
  double s = 0.0;  ///< arc length along the reference path [m]
  double d = 0.0;  ///< signed lateral deviation, positive to the left [m]
};

/// Curvilinear coordinates along a polyline reference path.
///
/// Normals are defined at the vertices (bisector of the adjacent segment
/// normals) and interpolated linearly along each segment, then normalized, so
/// the mapping (s, d) -> (x, y) is continuous across vertices and exactly
/// invertible inside the band where the projection is unique.
class CurvilinearFrame {
 public:
  static constexpr double kMinSegmentLength = 1e-9;

  CurvilinearFrame() = default;

  explicit CurvilinearFrame(std::vector<Vec2> polyline) : points_(std::move(polyline)) {
    if (points_.size() < 2) throw InputError("reference path needs at least two points");
    arc_.assign(1, 0.0);
    for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
      const double len = norm(points_[i + 1] - points_[i]);
      if (!(len > kMinSegmentLength)) {
        throw InputError("reference path segment " + std::to_string(i) + " is degenerate");
      }
      tangents_.push_back((points_[i + 1] - points_[i]) * (1.0 / len));
      arc_.push_back(arc_.back() + len);
    }
    normals_.resize(points_.size());
    normals_.front() = leftNormal(tangents_.front());
    normals_.back() = leftNormal(tangents_.back());
    for (std::size_t i = 1; i + 1 < points_.size(); ++i) {
      const Vec2 sum = leftNormal(tangents_[i - 1]) + leftNormal(tangents_[i]);
      if (norm(sum) < 1e-9) throw InputError("reference path reverses direction at vertex " + std::to_string(i));
      normals_[i] = normalized(sum);
    }
  }

  double length() const noexcept { return arc_.back(); }
  const std::vector<Vec2>& points() const noexcept { return points_; }
  const std::vector<double>& arcLengths() const noexcept { return arc_; }
  std::size_t segmentCount() const noexcept { return tangents_.size(); }

  /// Maps curvilinear coordinates to the Cartesian plane.
  Vec2 toCartesian(double s, double d) const {
    auto [i, lambda] = locate(s);
    return pointOn(i, lambda) + normalAt(i, lambda) * d;
  }

  /// Unit direction of travel at arc length s (perpendicular to the interpolated normal).
  Vec2 tangentAt(double s) const {
    auto [i, lambda] = locate(s);
    const Vec2 n = normalAt(i, lambda);
    return {n.y, -n.x};
  }

  /// Projects a Cartesian point. Throws if the point lies beyond the path ends
  /// or is equidistant to distinct parts of the path.
  CurvilinearPoint project(Vec2 p) const {
    std::optional<CurvilinearPoint> best;
    std::optional<CurvilinearPoint> rival;
    forEachFoot(p, [&](CurvilinearPoint c) {
      if (!best || std::abs(c.d) < std::abs(best->d)) {
        if (best) rival = best;
        best = c;
      } else if (!rival || std::abs(c.d) < std::abs(rival->d)) {
        rival = c;
      }
    });
    if (!best) throw InputError("point lies beyond the ends of the reference path");
    if (rival && std::abs(std::abs(rival->d) - std::abs(best->d)) <= 1e-9 && std::abs(rival->s - best->s) > 1e-6) {
      throw InputError("ambiguous projection onto the reference path");
    }
    return *best;
  }

  /// Signed distance to the nearest point of the polyline (segments clamped),
  /// positive to the left. Never throws; used for boundaries.
  double signedDistance(Vec2 p) const {
    double best = std::numeric_limits<double>::infinity();
    double sign = 1.0;
    for (std::size_t i = 0; i < tangents_.size(); ++i) {
      const Vec2 a = points_[i];
      const double segLen = arc_[i + 1] - arc_[i];
      const double t = std::clamp(dot(p - a, tangents_[i]), 0.0, segLen);
      const Vec2 foot = a + tangents_[i] * t;
      const double dist = norm(p - foot);
      if (dist < best) {
        best = dist;
        Vec2 dir = tangents_[i];
        if (t <= 0.0 && i > 0) dir = normalized(tangents_[i] + tangents_[i - 1]);
        if (t >= segLen && i + 1 < tangents_.size()) dir = normalized(tangents_[i] + tangents_[i + 1]);
        sign = cross(dir, p - foot) >= 0.0 ? 1.0 : -1.0;
      }
    }
    return sign * best;
  }

 private:
  std::pair<std::size_t, double> locate(double s) const {
    const double tol = 1e-9 * std::max(1.0, length());
    if (s < -tol || s > length() + tol) {
      throw InputError("arc length " + std::to_string(s) + " outside [0, " + std::to_string(length()) + "]");
    }
    s = std::clamp(s, 0.0, length());
    auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
    std::size_t i = it == arc_.begin() ? 0 : static_cast<std::size_t>(it - arc_.begin()) - 1;
    i = std::min(i, tangents_.size() - 1);
    return {i, (s - arc_[i]) / (arc_[i + 1] - arc_[i])};
  }

  Vec2 pointOn(std::size_t i, double lambda) const { return points_[i] + (points_[i + 1] - points_[i]) * lambda; }

  Vec2 normalAt(std::size_t i, double lambda) const {
    return normalized(normals_[i] + (normals_[i + 1] - normals_[i]) * lambda);
  }

  // Every foot point on every segment: lambda in [0,1] with (p - point(lambda)) parallel
  // to the interpolated normal. The parallel condition is quadratic in lambda.
  template <class F>
  void forEachFoot(Vec2 p, F&& emit) const {
    constexpr double eps = 1e-12;
    for (std::size_t i = 0; i < tangents_.size(); ++i) {
      const Vec2 a = points_[i];
      const Vec2 e = points_[i + 1] - a;
      const Vec2 n0 = normals_[i];
      const Vec2 dn = normals_[i + 1] - n0;
      const Vec2 r = p - a;
      const double qa = -cross(e, dn);
      const double qb = cross(r, dn) - cross(e, n0);
      const double qc = cross(r, n0);
      double roots[2];
      int count = 0;
      const double scale = std::max({std::abs(qb), std::abs(qc), 1e-300});
      if (std::abs(qa) <= 1e-14 * scale) {
        if (std::abs(qb) > 0.0) roots[count++] = -qc / qb;
      } else {
        const double disc = qb * qb - 4.0 * qa * qc;
        if (disc >= 0.0) {
          const double sq = std::sqrt(disc);
          const double q = -0.5 * (qb + (qb >= 0.0 ? sq : -sq));
          roots[count++] = q / qa;
          if (q != 0.0) roots[count++] = qc / q;
        }
      }
      for (int r_i = 0; r_i < count; ++r_i) {
        double lambda = roots[r_i];
        if (!(lambda >= -eps && lambda <= 1.0 + eps)) continue;
        lambda = std::clamp(lambda, 0.0, 1.0);
        const Vec2 foot = pointOn(i, lambda);
        const Vec2 n = normalAt(i, lambda);
        // Reject roots where the interpolated normal degenerates.
        if (!std::isfinite(n.x)) continue;
        emit(CurvilinearPoint{arc_[i] + lambda * (arc_[i + 1] - arc_[i]), dot(p - foot, n)});
      }
    }
  }

  std::vector<Vec2> points_;
  std::vector<Vec2> tangents_;
  std::vector<Vec2> normals_;
  std::vector<double> arc_;
};

}  // namespace mpr::scenario
