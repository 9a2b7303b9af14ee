#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mpr/error.hpp"

namespace mpr::scenario {

inline constexpr std::string_view kEgoId = "ego";

/// Vehicle state in the curvilinear frame of the road's reference path.
/// `d_rate` and `d_acc` are lateral velocity and acceleration; recorded
/// signals derive them from the lateral positions by finite differences.
struct VehicleState {
  double s = 0.0;
  double d = 0.0;
  double v = 0.0;
  double a = 0.0;
  double length = 4.5;
  double width = 1.8;
  double d_rate = 0.0;
  double d_acc = 0.0;

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct Agent {
  std::string id;
  VehicleState state;
};

/// Ego state plus the states of other vehicles at one time step.
struct JointState {
  VehicleState ego;
  std::vector<Agent> others;

  const VehicleState* find(std::string_view id) const {
    if (id == kEgoId) return &ego;
    for (const auto& o : others) {
      if (o.id == id) return &o.state;
    }
    return nullptr;
  }

  const VehicleState& at(std::string_view id) const {
    if (const VehicleState* s = find(id)) return *s;
    throw InputError("unknown vehicle id '" + std::string(id) + "'");
  }
};

/// Discrete-time signal of joint states with fixed step dt. Every step holds
/// the same set of vehicle ids.
class Signal {
 public:
  Signal() = default;

  Signal(std::vector<JointState> states, double dt) : states_(std::move(states)), dt_(dt) {
    if (states_.empty()) throw InputError("signal must contain at least one step");
    if (!(dt_ > 0.0)) throw InputError("signal dt must be positive");
    ids_ = idsOf(states_.front());
    for (std::size_t k = 1; k < states_.size(); ++k) {
      if (idsOf(states_[k]) != ids_) {
        throw InputError("signal step " + std::to_string(k) + " references a different vehicle set");
      }
    }
  }

  std::size_t size() const noexcept { return states_.size(); }
  double dt() const noexcept { return dt_; }
  const JointState& operator[](std::size_t k) const { return states_[k]; }
  const JointState& at(std::size_t k) const {
    if (k >= states_.size()) throw InputError("step " + std::to_string(k) + " outside the signal");
    return states_[k];
  }
  const std::vector<JointState>& states() const noexcept { return states_; }
  /// Ids of the non-ego vehicles, in the order they appear at step 0.
  std::vector<std::string> otherIds() const {
    std::vector<std::string> out;
    for (const auto& o : states_.front().others) out.push_back(o.id);
    return out;
  }

 private:
  static std::set<std::string> idsOf(const JointState& js) {
    std::set<std::string> ids;
    for (const auto& o : js.others) {
      if (o.id == kEgoId) throw InputError("ego must not appear among the other vehicles");
      if (!ids.insert(o.id).second) throw InputError("duplicate vehicle id '" + o.id + "'");
    }
    return ids;
  }

  std::vector<JointState> states_;
  std::set<std::string> ids_;
  double dt_ = 0.1;
};

}  // namespace mpr::scenario
