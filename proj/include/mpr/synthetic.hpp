#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mpr/scenario/io.hpp"
#include "mpr/scenario/road.hpp"
#include "mpr/scenario/state.hpp"

namespace mpr::synthetic {

using scenario::Agent;
using scenario::JointState;
using scenario::Road;
using scenario::Scenario;
using scenario::Signal;
using scenario::VehicleState;

/// Straight road along the x-axis. Lane k (1-based, rightmost first) has its
/// centerline at d = (k - 1) * width of the reference lane 1.
inline Road straightRoad(int lanes = 3, double width = 3.75, double length = 2000.0) {
  scenario::LaneNetwork net;
  for (int k = 1; k <= lanes; ++k) {
    scenario::Lane lane;
    lane.id = k;
    lane.width = width;
    const double y = (k - 1) * width;
    lane.centerline = {{0.0, y}, {length, y}};
    if (k > 1) lane.right = k - 1;
    if (k < lanes) lane.left = k + 1;
    net.lanes.push_back(lane);
  }
  return Road(net, 1);
}

/// Longitudinal constant acceleration and linear lateral drift from an initial state.
inline VehicleState propagate(const VehicleState& x0, double t) {
  VehicleState x = x0;
  x.s = x0.s + x0.v * t + 0.5 * x0.a * t * t;
  x.v = x0.v + x0.a * t;
  x.d = x0.d + x0.d_rate * t;
  x.d_acc = 0.0;
  return x;
}

struct Options {
  std::size_t steps = 80;
  double dt = 0.04;
  int lanes = 3;
  double laneWidth = 3.75;
  std::size_t minOthers = 1;
  std::size_t maxOthers = 3;
  double vMax = 33.33;
  double egoLateralRate = 1.0;  ///< bound of the ego's lateral drift [m/s]
};

/// Random straight-road scenario: the ego drifts laterally at a constant rate
/// with constant acceleration; other vehicles keep their lane with constant
/// acceleration.
inline Scenario randomScenario(std::mt19937_64& rng, const Options& opt = {}) {
  const double w = opt.laneWidth;
  std::uniform_int_distribution<int> lane(0, opt.lanes - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  std::uniform_int_distribution<std::size_t> count(opt.minOthers, opt.maxOthers);

  VehicleState ego;
  ego.s = uniform(150.0, 250.0);
  ego.d = lane(rng) * w + uniform(-0.35, 0.35) * w;
  ego.v = uniform(15.0, 36.0);
  ego.a = uniform(-3.5, 1.5);
  ego.d_rate = uniform(-opt.egoLateralRate, opt.egoLateralRate);
  ego.length = uniform(4.0, 5.0);
  ego.width = uniform(1.7, 2.0);
  const double duration = opt.dt * static_cast<double>(opt.steps - 1);
  const double top = (opt.lanes - 1) * w + 0.5 * w - 0.5 * ego.width;
  const double bottom = -0.5 * w + 0.5 * ego.width;
  const double dEnd = std::clamp(ego.d + ego.d_rate * duration, bottom, top);
  ego.d = std::clamp(ego.d, bottom, top);
  ego.d_rate = (dEnd - ego.d) / duration;

  std::vector<Agent> others;
  const std::size_t n = count(rng);
  for (std::size_t i = 0; i < n; ++i) {
    VehicleState b;
    b.s = ego.s + uniform(-30.0, 50.0);
    b.d = lane(rng) * w + uniform(-0.15, 0.15) * w;
    b.v = uniform(15.0, 35.0);
    b.a = uniform(-2.0, 1.0);
    b.length = uniform(4.0, 5.5);
    b.width = uniform(1.7, 2.1);
    others.push_back({std::to_string(i + 1), b});
  }

  std::vector<JointState> states;
  for (std::size_t k = 0; k < opt.steps; ++k) {
    const double t = opt.dt * static_cast<double>(k);
    JointState js;
    js.ego = propagate(ego, t);
    for (const auto& o : others) js.others.push_back({o.id, propagate(o.state, t)});
    states.push_back(std::move(js));
  }
  Scenario sc;
  sc.road = straightRoad(opt.lanes, w);
  sc.vMax = opt.vMax;
  sc.signal = Signal(std::move(states), opt.dt);
  return sc;
}

struct FollowingOptions {
  std::size_t steps = 200;
  double dt = 0.04;
  int lanes = 3;
  double laneWidth = 3.75;
  double vMax = 33.33;
  std::size_t maxNeighbours = 2;
  double aMin = 10.0;    ///< braking capability used for the safe distance
  double tReact = 0.4;
};

/// The recorded ego keeps its speed behind a slower vehicle in its lane and
/// falls below the safe distance after 1 to 4 seconds. Vehicles in the
/// neighbouring lanes drive at constant speed.
inline Scenario followingScenario(std::mt19937_64& rng, const FollowingOptions& opt = {}) {
  const double w = opt.laneWidth;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  std::uniform_int_distribution<int> lane(0, opt.lanes - 1);

  VehicleState ego;
  const int egoLane = lane(rng);
  ego.s = uniform(150.0, 250.0);
  ego.d = egoLane * w;
  ego.v = uniform(26.0, 32.0);
  ego.length = uniform(4.2, 4.8);
  ego.width = uniform(1.7, 1.9);

  VehicleState lead;
  lead.v = ego.v - uniform(6.0, 10.0);
  lead.d = ego.d;
  lead.length = uniform(4.2, 5.0);
  lead.width = uniform(1.7, 2.0);
  const double dSafe = ego.v * opt.tReact + (ego.v * ego.v - lead.v * lead.v) / (2.0 * opt.aMin);
  const double gap = dSafe + (ego.v - lead.v) * uniform(1.0, 4.0);
  lead.s = ego.s + gap + 0.5 * (ego.length + lead.length);

  std::vector<Agent> others{{"1", lead}};
  std::uniform_int_distribution<std::size_t> count(0, opt.maxNeighbours);
  const std::size_t n = count(rng);
  for (std::size_t i = 0; i < n; ++i) {
    int l = lane(rng);
    if (l == egoLane) l = egoLane + 1 < opt.lanes ? egoLane + 1 : egoLane - 1;
    if (l < 0) break;
    VehicleState b;
    b.d = l * w + uniform(-0.1, 0.1) * w;
    b.v = uniform(24.0, 32.0);
    b.s = ego.s + uniform(-60.0, 80.0);
    b.length = uniform(4.2, 5.0);
    b.width = uniform(1.7, 2.0);
    others.push_back({std::to_string(i + 2), b});
  }

  std::vector<JointState> states;
  for (std::size_t k = 0; k < opt.steps; ++k) {
    const double t = opt.dt * static_cast<double>(k);
    JointState js;
    js.ego = propagate(ego, t);
    for (const auto& o : others) js.others.push_back({o.id, propagate(o.state, t)});
    states.push_back(std::move(js));
  }
  Scenario sc;
  sc.road = straightRoad(opt.lanes, w);
  sc.vMax = opt.vMax;
  sc.signal = Signal(std::move(states), opt.dt);
  return sc;
}

}  // namespace mpr::synthetic
