#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mpr/error.hpp"
#include "mpr/scenario/road.hpp"
#include "mpr/scenario/state.hpp"
#include "mpr/stl/parser.hpp"

namespace mpr::predicates {

using scenario::JointState;
using scenario::Road;
using scenario::VehicleState;

/// Constants of the traffic-rule predicates.
struct RuleParams {
  double aMin = 10.0;          ///< assumed braking capability |a_min| [m/s^2]
  double tReact = 0.4;         ///< reaction time [s]
  std::optional<double> vMax;  ///< speed limit [m/s]
  double aBrake = -2.0;        ///< braking threshold [m/s^2]
  double mu = 1.2;             ///< safety margin factor justifying braking
  double sensorRange = 100.0;  ///< longitudinal range of considered vehicles [m]
  double rhoMax = 1e3;         ///< value of vacuously true evaluation functions
};

/// Road plus rule constants; everything a predicate needs besides the state.
struct World {
  const Road* road = nullptr;
  RuleParams params;
};

/// Rule constants with the scenario's speed limit taking precedence over the
/// configured one.
inline RuleParams resolveParams(RuleParams params, std::optional<double> scenarioVMax) {
  if (scenarioVMax) params.vMax = scenarioVMax;
  return params;
}

/// d_safe = v_e t_react + v_e^2 / (2|a_min|) - v_b^2 / (2|a_min|), clamped at 0.
inline double safeDistance(const RuleParams& p, double vEgo, double vOther) {
  const double d = vEgo * p.tReact + (vEgo * vEgo - vOther * vOther) / (2.0 * p.aMin);
  return std::max(0.0, d);
}

/// Bumper-to-bumper gap from x to a vehicle y ahead of it.
inline double bumperGap(const VehicleState& x, const VehicleState& y) {
  return (y.s - 0.5 * y.length) - (x.s + 0.5 * x.length);
}

inline bool shareLane(const Road& road, const VehicleState& x, const VehicleState& y) {
  const auto a = road.occupancy(x).lanes;
  const auto b = road.occupancy(y).lanes;
  std::vector<int> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  return !common.empty();
}

/// max over lanes of min(depth of x, depth of y); depth is the negated signed
/// separation between footprint and lane corridor.
inline double shareLaneAlpha(const Road& road, const VehicleState& x, const VehicleState& y) {
  const auto fx = road.footprint(x);
  const auto fy = road.footprint(y);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < road.laneCount(); ++l) {
    best = std::max(best, std::min(-road.laneSeparation(fx, l), -road.laneSeparation(fy, l)));
  }
  return best;
}

inline bool isInFront(const VehicleState& x, const VehicleState& y) { return y.s > x.s; }

inline bool safeDistanceHolds(const World& w, const VehicleState& x, const VehicleState& y) {
  if (!shareLane(*w.road, x, y) || !isInFront(x, y)) return true;
  return bumperGap(x, y) >= safeDistance(w.params, x.v, y.v);
}

inline double safeDistanceAlpha(const World& w, const VehicleState& x, const VehicleState& y) {
  if (!shareLane(*w.road, x, y) || !isInFront(x, y)) return w.params.rhoMax;
  return bumperGap(x, y) - safeDistance(w.params, x.v, y.v);
}

/// Vehicles other than `subject` within sensor range.
inline std::vector<const VehicleState*> surrounding(const World& w, const JointState& js, std::string_view subject) {
  std::vector<const VehicleState*> out;
  const VehicleState& x = js.at(subject);
  auto consider = [&](std::string_view id, const VehicleState& s) {
    if (id != subject && std::abs(s.s - x.s) <= w.params.sensorRange) out.push_back(&s);
  };
  consider(scenario::kEgoId, js.ego);
  for (const auto& o : js.others) consider(o.id, o.state);
  return out;
}

/// Leading same-lane vehicles whose gap is below mu * d_safe, as the amount by
/// which the gap falls short (positive when braking is justified).
inline double brakingJustification(const World& w, const JointState& js, std::string_view subject) {
  const VehicleState& x = js.at(subject);
  double best = -std::numeric_limits<double>::infinity();
  for (const VehicleState* y : surrounding(w, js, subject)) {
    if (!isInFront(x, *y) || !shareLane(*w.road, x, *y)) continue;
    best = std::max(best, w.params.mu * safeDistance(w.params, x.v, y->v) - bumperGap(x, *y));
  }
  return best;
}

inline bool noUnnecessaryBrakingHolds(const World& w, const JointState& js, std::string_view subject) {
  const VehicleState& x = js.at(subject);
  if (!(x.a < w.params.aBrake)) return true;
  for (const VehicleState* y : surrounding(w, js, subject)) {
    if (isInFront(x, *y) && shareLane(*w.road, x, *y) &&
        bumperGap(x, *y) < w.params.mu * safeDistance(w.params, x.v, y->v)) {
      return true;
    }
  }
  return false;
}

inline double noUnnecessaryBrakingAlpha(const World& w, const JointState& js, std::string_view subject) {
  const VehicleState& x = js.at(subject);
  return std::max(x.a - w.params.aBrake, brakingJustification(w, js, subject));
}

inline double speedLimitValue(const World& w) {
  if (!w.params.vMax) throw InputError("speed_limit requires v_max (scenario or rules.v_max)");
  return *w.params.vMax;
}

/// Nearest leading same-lane vehicle within sensor range: (gap, v_lead - v).
/// Without one, the gap is the sensor range and the speed difference 0.
inline std::pair<double, double> leadVehicle(const World& w, const JointState& js, std::string_view subject) {
  const VehicleState& x = js.at(subject);
  std::pair<double, double> lead{w.params.sensorRange, 0.0};
  double nearest = std::numeric_limits<double>::infinity();
  for (const VehicleState* y : surrounding(w, js, subject)) {
    if (!isInFront(x, *y) || !shareLane(*w.road, x, *y)) continue;
    if (y->s - x.s < nearest) {
      nearest = y->s - x.s;
      lead = {bumperGap(x, *y), y->v - x.v};
    }
  }
  return lead;
}

/// A registered atomic predicate. Arguments are vehicle ids; the first is the
/// subject (normally the ego vehicle).
struct PredicateDef {
  std::string name;
  std::size_t arity = 1;
  bool (*holds)(const World&, const JointState&, std::span<const std::string>) = nullptr;
  double (*alpha)(const World&, const JointState&, std::span<const std::string>) = nullptr;
  /// Features appended after the common ones (see featureSchema).
  std::vector<std::string> extraFeatures;
  /// Depends on all surrounding vehicles rather than on its arguments only.
  bool contextual = false;
};

class Registry {
 public:
  Registry() {
    add({"in_same_lane", 2,
         [](const World& w, const JointState& js, std::span<const std::string> a) {
           return shareLane(*w.road, js.at(a[0]), js.at(a[1]));
         },
         [](const World& w, const JointState& js, std::span<const std::string> a) {
           return shareLaneAlpha(*w.road, js.at(a[0]), js.at(a[1]));
         },
         {}});
    add({"in_front", 2,
         [](const World&, const JointState& js, std::span<const std::string> a) {
           return isInFront(js.at(a[0]), js.at(a[1]));
         },
         [](const World&, const JointState& js, std::span<const std::string> a) {
           return js.at(a[1]).s - js.at(a[0]).s;
         },
         {}});
    add({"safe_distance", 2,
         [](const World& w, const JointState& js, std::span<const std::string> a) {
           return safeDistanceHolds(w, js.at(a[0]), js.at(a[1]));
         },
         [](const World& w, const JointState& js, std::span<const std::string> a) {
           return safeDistanceAlpha(w, js.at(a[0]), js.at(a[1]));
         },
         {}});
    add({"no_unnecessary_braking", 1,
         [](const World& w, const JointState& js, std::span<const std::string> a) {
           return noUnnecessaryBrakingHolds(w, js, a[0]);
         },
         [](const World& w, const JointState& js, std::span<const std::string> a) {
           return noUnnecessaryBrakingAlpha(w, js, a[0]);
         },
         {"lead_gap", "lead_dv"},
         true});
    add({"speed_limit", 1,
         [](const World& w, const JointState& js, std::span<const std::string> a) {
           return js.at(a[0]).v <= speedLimitValue(w);
         },
         [](const World& w, const JointState& js, std::span<const std::string> a) {
           return speedLimitValue(w) - js.at(a[0]).v;
         },
         {}});
  }

  void add(PredicateDef def) {
    const std::string name = def.name;
    defs_[name] = std::move(def);
  }

  const PredicateDef* find(std::string_view name) const {
    auto it = defs_.find(std::string(name));
    return it == defs_.end() ? nullptr : &it->second;
  }

  const PredicateDef& at(std::string_view name) const {
    if (const PredicateDef* d = find(name)) return *d;
    throw InputError("unknown predicate '" + std::string(name) + "'");
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, def] : defs_) out.push_back(name);
    return out;
  }

  stl::PredicateLookup lookup() const {
    return [this](std::string_view name) -> std::optional<std::size_t> {
      if (const PredicateDef* d = find(name)) return d->arity;
      return std::nullopt;
    };
  }

  bool holds(const PredicateDef& def, const World& w, const JointState& js, std::span<const std::string> args) const {
    checkArgs(def, args);
    return def.holds(w, js, args);
  }

  double alpha(const PredicateDef& def, const World& w, const JointState& js, std::span<const std::string> args) const {
    checkArgs(def, args);
    return def.alpha(w, js, args);
  }

 private:
  static void checkArgs(const PredicateDef& def, std::span<const std::string> args) {
    if (args.size() != def.arity) {
      throw InputError(def.name + " expects " + std::to_string(def.arity) + " argument(s), got " +
                       std::to_string(args.size()));
    }
  }

  std::map<std::string, PredicateDef, std::less<>> defs_;
};

inline const Registry& defaultRegistry() {
  static const Registry registry;
  return registry;
}

}  // namespace mpr::predicates
