#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mpr/error.hpp"
#include "mpr/predicates/predicates.hpp"

namespace mpr::predicates {

namespace detail {

inline void appendVehicleNames(std::vector<std::string>& out, const std::string& prefix, bool withInput) {
  for (const char* f : {"l", "w", "s", "d", "v", "a"}) out.push_back(prefix + f);
  if (withInput) out.push_back(prefix + "d_rate");
  for (const char* f : {"lane_left", "lane_right", "road_left", "road_right"}) out.push_back(prefix + f);
}

inline void appendVehicle(std::vector<double>& out, const Road& road, const VehicleState& x, bool withInput) {
  out.insert(out.end(), {x.length, x.width, x.s, x.d, x.v, x.a});
  if (withInput) out.push_back(x.d_rate);
  const auto lane = road.centerLaneDistances(x);
  const auto bound = road.boundaryDistances(x);
  out.insert(out.end(), {lane.left, lane.right, bound.left, bound.right});
}

}  // namespace detail

/// Ordered feature names: characteristic value, ego vehicle, then for
/// two-vehicle predicates the other vehicle and relative quantities, then any
/// predicate-specific context features.
inline std::vector<std::string> featureSchema(const PredicateDef& def) {
  std::vector<std::string> out{"c"};
  detail::appendVehicleNames(out, "ego_", true);
  if (def.arity == 2) {
    detail::appendVehicleNames(out, "b_", false);
    out.insert(out.end(), {"rel_ds", "rel_dd", "rel_dv"});
  }
  out.insert(out.end(), def.extraFeatures.begin(), def.extraFeatures.end());
  return out;
}

/// Feature vector of `def` at a joint state. `other` names vehicle b and is
/// required exactly for two-vehicle predicates.
inline std::vector<double> extractFeatures(const PredicateDef& def, const World& w, const JointState& js,
                                           std::string_view other = {}) {
  if (def.arity == 2 && other.empty()) throw InputError(def.name + " features need the other vehicle id");
  if (def.arity == 1 && !other.empty()) throw InputError(def.name + " takes no other vehicle");
  std::vector<std::string> args{std::string(scenario::kEgoId)};
  if (def.arity == 2) args.emplace_back(other);

  std::vector<double> z;
  z.push_back(def.holds(w, js, args) ? 1.0 : -1.0);
  const VehicleState& ego = js.ego;
  detail::appendVehicle(z, *w.road, ego, true);
  if (def.arity == 2) {
    const VehicleState& b = js.at(other);
    detail::appendVehicle(z, *w.road, b, false);
    z.insert(z.end(), {b.s - ego.s, b.d - ego.d, b.v - ego.v});
  }
  if (!def.extraFeatures.empty()) {
    const auto [gap, dv] = leadVehicle(w, js, scenario::kEgoId);
    z.insert(z.end(), {gap, dv});
  }
  return z;
}

}  // namespace mpr::predicates
