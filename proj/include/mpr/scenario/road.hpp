#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mpr/error.hpp"
#include "mpr/scenario/curvilinear_frame.hpp"
#include "mpr/scenario/geometry.hpp"
#include "mpr/scenario/state.hpp"

namespace mpr::scenario {

/// Lane corridor: centerline polyline plus constant width.
struct Lane {
  int id = 0;
  std::vector<Vec2> centerline;
  double width = 3.75;
  std::optional<int> left;
  std::optional<int> right;
};

/// Lanes and road boundaries. Empty boundaries are derived from the outermost
/// lanes.
struct LaneNetwork {
  std::vector<Lane> lanes;
  std::vector<Vec2> leftBoundary;
  std::vector<Vec2> rightBoundary;
};

/// L (lanes the footprint overlaps) and L^c (lanes containing the center point).
struct OccupiedLanes {
  std::vector<int> lanes;
  std::vector<int> centerLanes;
};

struct SideDistances {
  double left = 0.0;
  double right = 0.0;
};

/// Compiled lane network: reference frame, per-lane frames and corridor
/// polygons, boundary polylines. Immutable once built.
class Road {
 public:
  Road() = default;

  explicit Road(LaneNetwork network, std::optional<int> referenceLane = std::nullopt)
      : network_(std::move(network)) {
    if (network_.lanes.empty()) throw InputError("lane network has no lanes");
    std::set<int> ids;
    for (const Lane& lane : network_.lanes) {
      if (!ids.insert(lane.id).second) throw InputError("duplicate lane id " + std::to_string(lane.id));
      if (!(lane.width > 0.0)) throw InputError("lane " + std::to_string(lane.id) + " has nonpositive width");
    }
    for (const Lane& lane : network_.lanes) {
      for (auto adj : {lane.left, lane.right}) {
        if (adj && !ids.count(*adj)) {
          throw InputError("lane " + std::to_string(lane.id) + " references unknown neighbor " + std::to_string(*adj));
        }
      }
      LaneGeometry g{lane.id, lane.width, CurvilinearFrame(lane.centerline), {}, {}};
      const auto& arc = g.frame.arcLengths();
      const double h = 0.5 * lane.width;
      for (std::size_t i = 0; i + 1 < arc.size(); ++i) {
        Quad q{g.frame.toCartesian(arc[i], -h), g.frame.toCartesian(arc[i + 1], -h), g.frame.toCartesian(arc[i + 1], h),
               g.frame.toCartesian(arc[i], h)};
        g.quads.push_back(q);
        g.boxes.push_back(boundsOf(q));
      }
      lanes_.push_back(std::move(g));
    }
    referenceLane_ = referenceLane.value_or(network_.lanes.front().id);
    reference_ = lanes_[laneIndex(referenceLane_)].frame;

    if (network_.leftBoundary.empty()) network_.leftBoundary = outerEdge(true);
    if (network_.rightBoundary.empty()) network_.rightBoundary = outerEdge(false);
    leftBoundary_ = CurvilinearFrame(network_.leftBoundary);
    rightBoundary_ = CurvilinearFrame(network_.rightBoundary);
  }

  const LaneNetwork& network() const noexcept { return network_; }
  const CurvilinearFrame& frame() const noexcept { return reference_; }
  int referenceLane() const noexcept { return referenceLane_; }
  std::size_t laneCount() const noexcept { return lanes_.size(); }
  int laneId(std::size_t index) const { return lanes_.at(index).id; }
  double laneWidth(std::size_t index) const { return lanes_.at(index).width; }

  std::size_t laneIndex(int id) const {
    for (std::size_t i = 0; i < lanes_.size(); ++i) {
      if (lanes_[i].id == id) return i;
    }
    throw InputError("unknown lane id " + std::to_string(id));
  }

  Vec2 center(const VehicleState& v) const { return reference_.toCartesian(v.s, v.d); }

  /// Oriented footprint; the vehicle is aligned with the reference path tangent at s.
  Quad footprint(const VehicleState& v) const {
    return orientedBox(reference_.toCartesian(v.s, v.d), reference_.tangentAt(v.s), v.length, v.width);
  }

  /// Signed separation between a footprint and a lane corridor: negative iff
  /// their interiors overlap.
  double laneSeparation(const Quad& footprint, std::size_t laneIdx) const {
    const LaneGeometry& g = lanes_.at(laneIdx);
    const Aabb fb = boundsOf(footprint);
    double best = std::numeric_limits<double>::infinity();
    bool anyCandidate = false;
    for (std::size_t q = 0; q < g.quads.size(); ++q) {
      if (fb.gap(g.boxes[q]) > 0.0) continue;
      anyCandidate = true;
      best = std::min(best, separation(footprint, g.quads[q]));
    }
    if (anyCandidate && best < 0.0) return best;
    for (std::size_t q = 0; q < g.quads.size(); ++q) best = std::min(best, separation(footprint, g.quads[q]));
    return best;
  }

  bool laneContains(std::size_t laneIdx, Vec2 p) const {
    const LaneGeometry& g = lanes_.at(laneIdx);
    for (std::size_t q = 0; q < g.quads.size(); ++q) {
      if (p.x < g.boxes[q].minX - 1e-9 || p.x > g.boxes[q].maxX + 1e-9 || p.y < g.boxes[q].minY - 1e-9 ||
          p.y > g.boxes[q].maxY + 1e-9) {
        continue;
      }
      if (containsPoint(g.quads[q], p, 1e-9)) return true;
    }
    return false;
  }

  /// Lanes overlapped by the footprint (exact rectangle / corridor overlap
  /// with zero tolerance) and lanes containing the center point.
  OccupiedLanes occupiedLanes(const VehicleState& v) const {
    OccupiedLanes out = occupancy(v);
    if (out.lanes.empty()) throw InputError("vehicle is fully off-road");
    return out;
  }

  /// Like occupiedLanes, but returns empty sets for a vehicle that is fully off-road.
  OccupiedLanes occupancy(const VehicleState& v) const {
    const Quad fp = footprint(v);
    const Vec2 c = center(v);
    const Aabb fb = boundsOf(fp);
    OccupiedLanes out;
    for (std::size_t i = 0; i < lanes_.size(); ++i) {
      const LaneGeometry& g = lanes_[i];
      bool overlaps = false;
      for (std::size_t q = 0; q < g.quads.size() && !overlaps; ++q) {
        if (fb.gap(g.boxes[q]) > 0.0) continue;
        overlaps = separation(fp, g.quads[q]) < 0.0;
      }
      if (overlaps) out.lanes.push_back(g.id);
      if (laneContains(i, c)) out.centerLanes.push_back(g.id);
    }
    std::sort(out.lanes.begin(), out.lanes.end());
    std::sort(out.centerLanes.begin(), out.centerLanes.end());
    return out;
  }

  /// Index of the lane used as the vehicle's center lane: the first lane
  /// containing the center, else the lane with the nearest centerline.
  std::size_t centerLaneIndex(const VehicleState& v) const {
    const Vec2 c = center(v);
    for (std::size_t i = 0; i < lanes_.size(); ++i) {
      if (laneContains(i, c)) return i;
    }
    std::size_t best = 0;
    double bestDist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < lanes_.size(); ++i) {
      const double dist = std::abs(lanes_[i].frame.signedDistance(c));
      if (dist < bestDist) {
        bestDist = dist;
        best = i;
      }
    }
    return best;
  }

  /// Signed distances from the vehicle center to the left and right bounds of
  /// its center lane; both positive when the center is inside the lane.
  SideDistances centerLaneDistances(const VehicleState& v) const {
    const std::size_t i = centerLaneIndex(v);
    const double dl = lanes_[i].frame.signedDistance(center(v));
    const double h = 0.5 * lanes_[i].width;
    return {h - dl, h + dl};
  }

  /// Signed distances from the vehicle center to the left and right road
  /// boundaries; positive inside the road.
  SideDistances boundaryDistances(const VehicleState& v) const {
    const Vec2 c = center(v);
    return {-leftBoundary_.signedDistance(c), rightBoundary_.signedDistance(c)};
  }

  /// Lateral coordinate (reference frame) of the center lane's centerline at the vehicle.
  double centerLaneOffset(const VehicleState& v) const {
    const std::size_t i = centerLaneIndex(v);
    return v.d - lanes_[i].frame.signedDistance(center(v));
  }

  /// Smallest inside-distance of the footprint corners to the road boundaries;
  /// negative when any corner is outside.
  double roadClearance(const Quad& fp) const {
    double worst = std::numeric_limits<double>::infinity();
    for (Vec2 c : fp) {
      worst = std::min(worst, -leftBoundary_.signedDistance(c));
      worst = std::min(worst, rightBoundary_.signedDistance(c));
    }
    return worst;
  }

 private:
  struct LaneGeometry {
    int id;
    double width;
    CurvilinearFrame frame;
    std::vector<Quad> quads;
    std::vector<Aabb> boxes;
  };

  std::vector<Vec2> outerEdge(bool left) const {
    for (std::size_t i = 0; i < network_.lanes.size(); ++i) {
      const Lane& lane = network_.lanes[i];
      if ((left && !lane.left) || (!left && !lane.right)) {
        const auto& g = lanes_[i];
        std::vector<Vec2> edge;
        const double off = (left ? 0.5 : -0.5) * lane.width;
        for (double s : g.frame.arcLengths()) edge.push_back(g.frame.toCartesian(s, off));
        return edge;
      }
    }
    throw InputError(std::string("no outermost lane on the ") + (left ? "left" : "right") + " to derive a boundary");
  }

  LaneNetwork network_;
  std::vector<LaneGeometry> lanes_;
  int referenceLane_ = 0;
  CurvilinearFrame reference_;
  CurvilinearFrame leftBoundary_;
  CurvilinearFrame rightBoundary_;
};

}  // namespace mpr::scenario
