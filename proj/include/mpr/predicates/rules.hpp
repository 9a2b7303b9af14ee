#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpr/predicates/predicates.hpp"
#include "mpr/scenario/state.hpp"
#include "mpr/stl/formula.hpp"
#include "mpr/stl/parser.hpp"

namespace mpr::predicates {

/// Interstate rules in the formula grammar. `window` bounds the globally
/// operator; without it the rules range to the end of the signal.
inline std::string ruleText(std::optional<std::size_t> window = std::nullopt) {
  const std::string w = window ? std::to_string(*window) : "inf";
  return "# safe distance to the preceding vehicle\n"
         "R_G1 := G[0," + w + "](A[b](!in_same_lane(ego,b) | !in_front(ego,b) | safe_distance(ego,b)))\n"
         "# no unnecessary braking\n"
         "R_G2 := G[0," + w + "](no_unnecessary_braking(ego))\n"
         "# maximum speed limit\n"
         "R_G3 := G[0," + w + "](speed_limit(ego))\n";
}

inline std::vector<stl::NamedFormula> ruleFormulas(std::optional<std::size_t> window = std::nullopt,
                                                    const Registry& registry = defaultRegistry()) {
  return stl::parseRules(ruleText(window), registry.lookup());
}

/// Trace over a sequence of joint states whose predicate leaves are evaluated
/// through the registry; ForAll ranges over the non-ego vehicles.
class StateTrace {
 public:
  StateTrace(const Registry& registry, const World& world, std::span<const JointState> states)
      : registry_(&registry), world_(&world), states_(states) {
    if (!states_.empty()) {
      for (const auto& o : states_.front().others) ids_.push_back(o.id);
    }
  }

  std::size_t length() const { return states_.size(); }
  std::span<const std::string> quantifiedIds() const { return ids_; }

  bool holds(const stl::Predicate& p, std::span<const std::string> args, std::size_t k) const {
    return registry_->holds(registry_->at(p.name), *world_, states_[k], args);
  }
  double alpha(const stl::Predicate& p, std::span<const std::string> args, std::size_t k) const {
    return registry_->alpha(registry_->at(p.name), *world_, states_[k], args);
  }

 private:
  const Registry* registry_;
  const World* world_;
  std::span<const JointState> states_;
  std::vector<std::string> ids_;
};

}  // namespace mpr::predicates
