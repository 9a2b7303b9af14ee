#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpr/error.hpp"
#include "mpr/gp/dataset.hpp"
#include "mpr/gp/gp.hpp"
#include "mpr/predicates/predicates.hpp"
#include "mpr/predicates/rules.hpp"
#include "mpr/robustness/mpr.hpp"
#include "mpr/sampler/sampler.hpp"
#include "mpr/scenario/geometry.hpp"
#include "mpr/scenario/io.hpp"
#include "mpr/stl/semantics.hpp"

namespace mpr::planner {

using predicates::PredicateDef;
using predicates::World;
using sampler::Quintic;
using sampler::Range;
using sampler::TrajectorySample;
using scenario::JointState;
using scenario::Road;
using scenario::Scenario;
using scenario::Signal;
using scenario::VehicleState;

struct CostWeights {
  double jerk = 1.0;
  double speed = 1.0;
  double lateral = 0.1;
};

struct PlannerConfig {
  double dt = 0.2;
  std::size_t horizon = 30;
  std::size_t nV = 10;
  std::size_t nD = 5;
  std::size_t nS = 9;
  Range dv{-10.0, 6.0};
  double dSpan = 1.0;
  Range ds{-4.0, 4.0};
  sampler::KinematicLimits limits;
  double lambdaR = 10.0;
  CostWeights weights;
  std::optional<double> targetSpeed;  ///< defaults to the ego's current speed
  bool exactLeaves = false;           ///< score rule leaves with exact MPR instead of GP models
  sampler::SamplerConfig exactSampler = defaultExactSampler();

  static sampler::SamplerConfig defaultExactSampler() {
    sampler::SamplerConfig c;
    c.horizon = 7;
    c.nV = c.nD = c.nS = 3;
    return c;
  }

  void validate() const {
    if (!(dt > 0.0)) throw InputError("planner.dt must be positive");
    if (horizon < 1) throw InputError("planner.horizon must be at least 1");
    if (!(lambdaR >= 0.0)) throw InputError("planner.lambda_r must be nonnegative");
    if (weights.jerk < 0 || weights.speed < 0 || weights.lateral < 0) {
      throw InputError("planner cost weights must be nonnegative");
    }
  }

  sampler::SamplerConfig samplerConfig() const {
    sampler::SamplerConfig c;
    c.horizon = horizon;
    c.dt = dt;
    c.nV = nV;
    c.nD = nD;
    c.nS = nS;
    c.dv = dv;
    c.dSpan = dSpan;
    c.ds = ds;
    c.limits = limits;
    return c;
  }
};

/// Integral of the squared jerk of a quintic over [0, T].
inline double jerkIntegral(const Quintic& q, double T) {
  const double a = 6.0 * q.c[3], b = 24.0 * q.c[4], c = 60.0 * q.c[5];
  const double T2 = T * T, T3 = T2 * T, T4 = T3 * T, T5 = T4 * T;
  return a * a * T + a * b * T2 + (b * b + 2.0 * a * c) * T3 / 3.0 + b * c * T4 / 2.0 + c * c * T5 / 5.0;
}

struct PerformanceCost {
  double jerk = 0.0;
  double speed = 0.0;
  double lateral = 0.0;
  double total = 0.0;
};

/// Weighted longitudinal and lateral jerk, terminal speed deviation and
/// lateral offset from the center-lane centerline (trapezoidal in time).
inline PerformanceCost performanceCost(const TrajectorySample& s, const Road& road, double dt, double targetSpeed,
                                       const CostWeights& w) {
  PerformanceCost c;
  const double T = dt * static_cast<double>(s.states.size() - 1);
  c.jerk = jerkIntegral(s.lon, T) + jerkIntegral(s.lat, T);
  const double dv = s.states.back().v - targetSpeed;
  c.speed = dv * dv;
  for (std::size_t i = 0; i < s.states.size(); ++i) {
    const double off = s.states[i].d - road.centerLaneOffset(s.states[i]);
    const double weight = (i == 0 || i + 1 == s.states.size()) ? 0.5 : 1.0;
    c.lateral += weight * off * off * dt;
  }
  c.total = w.jerk * c.jerk + w.speed * c.speed + w.lateral * c.lateral;
  return c;
}

/// States of one recorded vehicle at times k*dt_rec + tau*dt for tau = 0..horizon:
/// linear interpolation within the recording, constant speed beyond it.
inline std::vector<VehicleState> resampleVehicle(const Signal& signal, std::string_view id, std::size_t k, double dt,
                                                 std::size_t horizon) {
  auto stateAt = [&](std::size_t i) -> const VehicleState& {
    return id == scenario::kEgoId ? signal[i].ego : signal[i].at(id);
  };
  std::vector<VehicleState> out;
  out.reserve(horizon + 1);
  const std::size_t last = signal.size() - 1;
  for (std::size_t tau = 0; tau <= horizon; ++tau) {
    const double f = static_cast<double>(k) + static_cast<double>(tau) * dt / signal.dt();
    const double fl = std::floor(f + 1e-9);
    if (fl >= static_cast<double>(last)) {
      VehicleState x = stateAt(last);
      const double extra = (f - static_cast<double>(last)) * signal.dt();
      x.s += x.v * extra;
      x.d += x.d_rate * extra;
      x.a = 0.0;
      x.d_acc = 0.0;
      out.push_back(x);
      continue;
    }
    const auto i = static_cast<std::size_t>(fl);
    const double r = std::max(0.0, f - fl);
    if (r < 1e-9) {
      out.push_back(stateAt(i));
      continue;
    }
    const VehicleState& a = stateAt(i);
    const VehicleState& b = stateAt(i + 1);
    VehicleState x = a;
    x.s = a.s + r * (b.s - a.s);
    x.d = a.d + r * (b.d - a.d);
    x.v = a.v + r * (b.v - a.v);
    x.a = a.a + r * (b.a - a.a);
    x.d_rate = a.d_rate + r * (b.d_rate - a.d_rate);
    x.d_acc = a.d_acc + r * (b.d_acc - a.d_acc);
    out.push_back(x);
  }
  return out;
}

inline std::map<std::string, std::vector<VehicleState>> predictOthers(const Signal& signal, std::size_t k, double dt,
                                                                     std::size_t horizon) {
  std::map<std::string, std::vector<VehicleState>> out;
  for (const auto& id : signal.otherIds()) out[id] = resampleVehicle(signal, id, k, dt, horizon);
  return out;
}

/// Joint states of an ego trajectory with the other vehicles' predictions.
inline std::vector<JointState> jointTrace(const std::vector<VehicleState>& ego,
                                          const std::map<std::string, std::vector<VehicleState>>& others) {
  std::vector<std::string> order;
  for (const auto& [id, traj] : others) order.push_back(id);
  std::vector<JointState> out;
  out.reserve(ego.size());
  for (std::size_t t = 0; t < ego.size(); ++t) out.push_back(sampler::jointAt(ego, others, order, t));
  return out;
}

/// Smallest footprint separation between the ego and any other vehicle over
/// the trace; negative when some footprints overlap.
inline double minimumClearance(const Road& road, std::span<const JointState> trace) {
  double best = std::numeric_limits<double>::infinity();
  for (const JointState& js : trace) {
    const scenario::Quad e = road.footprint(js.ego);
    for (const auto& o : js.others) {
      best = std::min(best, scenario::separation(e, road.footprint(o.state)));
    }
  }
  return best;
}

inline bool collisionFree(const Road& road, std::span<const JointState> trace) {
  return minimumClearance(road, trace) > 0.0;
}

struct LeafValue {
  double rho = 0.0;
  double sigma = 0.0;
};

/// Scores a predicate leaf at step k of a joint-state trace with time step dt.
class LeafScorer {
 public:
  virtual ~LeafScorer() = default;
  virtual LeafValue score(const PredicateDef& def, const World& world, std::span<const JointState> trace,
                          double dt, std::size_t k, std::span<const std::string> args, bool withSigma) const = 0;
  /// Throws when a predicate referenced by the rules cannot be scored.
  virtual void require(const std::string& predicate) const = 0;
};

/// Rectified GP mean of a trained model per predicate.
class GpLeafScorer : public LeafScorer {
 public:
  void add(std::shared_ptr<const gp::RobustnessModel> model) {
    const std::string name = model->predicate;
    models_[name] = std::move(model);
  }

  void require(const std::string& predicate) const override {
    if (!models_.count(predicate)) throw InputError("no trained model for predicate '" + predicate + "'");
  }

  LeafValue score(const PredicateDef& def, const World& world, std::span<const JointState> trace, double,
                  std::size_t k, std::span<const std::string> args, bool withSigma) const override {
    const auto it = models_.find(def.name);
    if (it == models_.end()) throw InputError("no trained model for predicate '" + def.name + "'");
    const gp::RobustnessModel& m = *it->second;
    const auto z = predicates::extractFeatures(def, world, trace[k], def.arity == 2 ? args[1] : std::string_view{});
    const Eigen::Map<const gp::VectorXd> zv(z.data(), static_cast<Eigen::Index>(z.size()));
    const int c = z[0] > 0 ? 1 : -1;
    if (!withSigma) return {gp::rectifyPrediction(m.gp.predictMean(zv), c), 0.0};
    const gp::Prediction p = m.gp.predict(zv);
    return {gp::rectifyPrediction(p.mean, c), std::sqrt(p.variance)};
  }

 private:
  std::map<std::string, std::shared_ptr<const gp::RobustnessModel>> models_;
};

/// Exact model predictive robustness on the trace, continued at constant
/// speed where the prediction horizon runs past its end.
class ExactLeafScorer : public LeafScorer {
 public:
  ExactLeafScorer(sampler::SamplerConfig cfg, std::map<std::string, robustness::NormalizationConstants> norms)
      : cfg_(cfg), norms_(std::move(norms)) {}

  void require(const std::string& predicate) const override {
    if (!norms_.count(predicate)) throw InputError("no normalization constants for predicate '" + predicate + "'");
  }

  LeafValue score(const PredicateDef& def, const World& world, std::span<const JointState> trace, double dt,
                  std::size_t k, std::span<const std::string> args, bool) const override {
    require(def.name);
    std::vector<JointState> states(trace.begin(), trace.end());
    while (states.size() <= k + cfg_.horizon) {
      JointState next = states.back();
      auto advance = [dt](VehicleState& x) {
        x.s += x.v * dt;
        x.d += x.d_rate * dt;
        x.a = 0.0;
        x.d_acc = 0.0;
      };
      advance(next.ego);
      for (auto& o : next.others) advance(o.state);
      states.push_back(std::move(next));
    }
    const Signal sig(std::move(states), dt);
    return {robustness::computeMPR(def, world, sig, k, args, cfg_, norms_.at(def.name)).rho, 0.0};
  }

 private:
  sampler::SamplerConfig cfg_;
  std::map<std::string, robustness::NormalizationConstants> norms_;
};

/// STL trace whose predicate leaves are scored by a LeafScorer. Leaf values
/// with their deviations are memoized per step.
class ScoredTrace {
 public:
  ScoredTrace(const predicates::Registry& registry, const World& world, std::span<const JointState> states, double dt,
              const LeafScorer& scorer, bool withSigma)
      : registry_(&registry), world_(&world), states_(states), dt_(dt), scorer_(&scorer), withSigma_(withSigma),
        memo_(states.size()) {
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
    return leaf(p, args, k).rho;
  }

  LeafValue leaf(const stl::Predicate& p, std::span<const std::string> args, std::size_t k) const {
    std::string key = p.name;
    for (const auto& a : args) key += "\x1f" + a;
    auto& slot = memo_[k];
    if (auto it = slot.find(key); it != slot.end()) return it->second;
    const PredicateDef& def = registry_->at(p.name);
    const LeafValue v = scorer_->score(def, *world_, states_, dt_, k, args, withSigma_);
    slot.emplace(std::move(key), v);
    return v;
  }

  /// Deviation of a memoized leaf at step k whose value equals +-rho, or 0.
  double sigmaFor(std::size_t k, double rho) const {
    for (const auto& [key, v] : memo_[k]) {
      if (v.rho == rho || -v.rho == rho) return v.sigma;
    }
    return 0.0;
  }

 private:
  const predicates::Registry* registry_;
  const World* world_;
  std::span<const JointState> states_;
  double dt_;
  const LeafScorer* scorer_;
  bool withSigma_;
  std::vector<std::string> ids_;
  mutable std::vector<std::map<std::string, LeafValue>> memo_;
};

/// Robustness leaves live in [-1, 1]; an empty conjunction counts as fully robust.
inline stl::ModelFreeSemantics ruleSemantics() { return stl::ModelFreeSemantics{1.0}; }

struct RuleScore {
  std::string rule;
  double rho = 0.0;
};

/// Robustness of each rule at the first step of the trace and their sum.
inline std::pair<double, std::vector<RuleScore>> ruleRobustnessCost(std::span<const stl::NamedFormula> rules,
                                                                     const ScoredTrace& trace) {
  double sum = 0.0;
  std::vector<RuleScore> per;
  for (const auto& r : rules) {
    const double rho = stl::evaluate(r.formula, trace, 0, ruleSemantics()).value;
    per.push_back({r.name, rho});
    sum += rho;
  }
  return {sum, per};
}

struct SampleCost {
  PerformanceCost performance;
  double jr = 0.0;
  std::vector<RuleScore> rules;
  bool collisionFree = false;
  double clearance = 0.0;
};

/// Index of the collision-free sample minimizing J_p - lambda*J_r; ties go to
/// the earliest sample in grid order. Empty when no sample is collision-free.
inline std::optional<std::size_t> selectSample(std::span<const SampleCost> costs, double lambda) {
  std::optional<std::size_t> best;
  double bestJ = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!costs[i].collisionFree) continue;
    const double j = costs[i].performance.total - lambda * costs[i].jr;
    if (j < bestJ) {
      bestJ = j;
      best = i;
    }
  }
  return best;
}

/// Smallest lambda above which the selection maximizes J_r among the
/// collision-free samples: (max J_p - min J_p) / (smallest positive J_r gap),
/// increased slightly. Zero when all J_r values coincide.
inline double lambdaThreshold(std::span<const SampleCost> costs) {
  std::vector<double> jr;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& c : costs) {
    if (!c.collisionFree) continue;
    jr.push_back(c.jr);
    lo = std::min(lo, c.performance.total);
    hi = std::max(hi, c.performance.total);
  }
  std::sort(jr.begin(), jr.end());
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < jr.size(); ++i) {
    if (jr[i] > jr[i - 1]) gap = std::min(gap, jr[i] - jr[i - 1]);
  }
  if (!std::isfinite(gap)) return 0.0;
  const double lambda = (hi - lo) / gap;
  return lambda * (1.0 + 1e-9) + 1e-9;
}

struct ProfileRow {
  std::size_t step = 0;
  std::string rule;
  double rho = 0.0;
  double sigma = 0.0;
};

struct PlanResult {
  std::size_t index = 0;
  TrajectorySample trajectory;
  std::vector<JointState> trace;
  std::vector<SampleCost> costs;
  double lambda = 0.0;
  std::vector<ProfileRow> profile;
  std::size_t gridSize = 0;
};

/// Per-step robustness of each rule body along a trace (the argument of the
/// rule's outer globally operator, or the whole rule otherwise).
inline std::vector<ProfileRow> robustnessProfile(std::span<const stl::NamedFormula> rules, const ScoredTrace& trace) {
  std::vector<ProfileRow> out;
  for (const auto& r : rules) {
    const stl::Formula body = r.formula.as<stl::Globally>() ? r.formula.as<stl::Globally>()->arg : r.formula;
    for (std::size_t k = 0; k < trace.length(); ++k) {
      const double rho = stl::evaluate(body, trace, k, ruleSemantics()).value;
      out.push_back({k, r.name, rho, trace.sigmaFor(k, rho)});
    }
  }
  return out;
}

class Planner {
 public:
  Planner(PlannerConfig cfg, const LeafScorer& scorer, std::vector<stl::NamedFormula> rules = predicates::ruleFormulas(),
          const predicates::Registry& registry = predicates::defaultRegistry())
      : cfg_(std::move(cfg)), scorer_(&scorer), rules_(std::move(rules)), registry_(&registry) {
    cfg_.validate();
    for (const auto& r : rules_) {
      std::vector<stl::Predicate> leaves;
      stl::collectPredicates(r.formula, leaves);
      for (const auto& p : leaves) scorer_->require(p.name);
    }
  }

  const PlannerConfig& config() const { return cfg_; }
  std::span<const stl::NamedFormula> rules() const { return rules_; }

  /// Kinematically feasible grid samples at step k, in grid order.
  std::vector<TrajectorySample> candidates(const Scenario& sc, std::size_t k) const {
    return sampler::sampleEgoTrajectories(sc.signal.at(k), sc.road, cfg_.samplerConfig());
  }

  /// Rule robustness along an ego trajectory sampled at the planner step. The
  /// first state is the current one, shared by every candidate, so the rules
  /// are evaluated from the first planned step on.
  std::pair<double, std::vector<RuleScore>> scoreTrace(const World& world, std::span<const JointState> trace) const {
    if (trace.size() > 1) trace = trace.subspan(1);
    const ScoredTrace st(*registry_, world, trace, cfg_.dt, *scorer_, false);
    return ruleRobustnessCost(rules_, st);
  }

  std::vector<ProfileRow> profile(const World& world, std::span<const JointState> trace) const {
    const ScoredTrace st(*registry_, world, trace, cfg_.dt, *scorer_, true);
    return robustnessProfile(rules_, st);
  }

  /// Selects the collision-free sample minimizing J_p - lambda*J_r, with
  /// lambda defaulting to the configured value. Rule robustness is only
  /// computed for all samples when lambda > 0.
  PlanResult plan(const Scenario& sc, std::size_t k, std::optional<double> lambda = std::nullopt) const {
    const World world{&sc.road, predicates::resolveParams(params_, sc.vMax)};
    const JointState& now = sc.signal.at(k);
    const double target = cfg_.targetSpeed.value_or(now.ego.v);
    const auto samples = candidates(sc, k);
    PlanResult out;
    out.gridSize = cfg_.nV * cfg_.nD * cfg_.nS;
    out.lambda = lambda.value_or(cfg_.lambdaR);
    if (samples.empty()) throw InputError("no kinematically feasible trajectory sample at step " + std::to_string(k));
    const auto others = predictOthers(sc.signal, k, cfg_.dt, cfg_.horizon);
    std::vector<std::vector<JointState>> traces;
    traces.reserve(samples.size());
    const bool needRules = out.lambda > 0.0;
    for (const auto& s : samples) {
      traces.push_back(jointTrace(s.states, others));
      SampleCost c;
      c.performance = performanceCost(s, sc.road, cfg_.dt, target, cfg_.weights);
      c.clearance = minimumClearance(sc.road, traces.back());
      c.collisionFree = c.clearance > 0.0;
      if (c.collisionFree && needRules) std::tie(c.jr, c.rules) = scoreTrace(world, traces.back());
      out.costs.push_back(std::move(c));
    }
    const auto best = selectSample(out.costs, out.lambda);
    if (!best) {
      const auto it = std::max_element(out.costs.begin(), out.costs.end(),
                                       [](const SampleCost& a, const SampleCost& b) { return a.clearance < b.clearance; });
      std::ostringstream msg;
      msg << "no collision-free trajectory among " << samples.size() << " feasible samples at step " << k
          << "; best sample " << (it - out.costs.begin()) << " overlaps by " << -it->clearance << " m";
      throw InputError(msg.str());
    }
    out.index = *best;
    out.trajectory = samples[*best];
    out.trace = traces[*best];
    if (!needRules) std::tie(out.costs[*best].jr, out.costs[*best].rules) = scoreTrace(world, out.trace);
    out.profile = profile(world, out.trace);
    return out;
  }

  /// Scores every collision-free sample (for scalarization studies).
  std::vector<SampleCost> scoreAll(const Scenario& sc, std::size_t k) const {
    const World world{&sc.road, predicates::resolveParams(params_, sc.vMax)};
    const JointState& now = sc.signal.at(k);
    const double target = cfg_.targetSpeed.value_or(now.ego.v);
    const auto others = predictOthers(sc.signal, k, cfg_.dt, cfg_.horizon);
    std::vector<SampleCost> out;
    for (const auto& s : candidates(sc, k)) {
      const auto trace = jointTrace(s.states, others);
      SampleCost c;
      c.performance = performanceCost(s, sc.road, cfg_.dt, target, cfg_.weights);
      c.clearance = minimumClearance(sc.road, trace);
      c.collisionFree = c.clearance > 0.0;
      if (c.collisionFree) std::tie(c.jr, c.rules) = scoreTrace(world, trace);
      out.push_back(std::move(c));
    }
    return out;
  }

  /// Rule robustness of the recorded ego over the planning horizon.
  std::pair<double, std::vector<RuleScore>> scoreRecorded(const Scenario& sc, std::size_t k) const {
    const World world{&sc.road, predicates::resolveParams(params_, sc.vMax)};
    const auto ego = resampleVehicle(sc.signal, scenario::kEgoId, k, cfg_.dt, cfg_.horizon);
    const auto trace = jointTrace(ego, predictOthers(sc.signal, k, cfg_.dt, cfg_.horizon));
    return scoreTrace(world, trace);
  }

  void setRuleParams(predicates::RuleParams p) { params_ = p; }

 private:
  PlannerConfig cfg_;
  const LeafScorer* scorer_;
  std::vector<stl::NamedFormula> rules_;
  const predicates::Registry* registry_;
  predicates::RuleParams params_;
};

inline std::string profileToCsv(std::span<const ProfileRow> rows) {
  std::ostringstream out;
  out.precision(17);
  out << "step,rule,rho,sigma\n";
  for (const auto& r : rows) out << r.step << ',' << r.rule << ',' << r.rho << ',' << r.sigma << '\n';
  return out.str();
}

inline std::string trajectoryToCsv(const TrajectorySample& s, double dt) {
  std::ostringstream out;
  out.precision(17);
  out << "step,t,s,d,v,a,d_rate\n";
  for (std::size_t i = 0; i < s.states.size(); ++i) {
    const auto& x = s.states[i];
    out << i << ',' << dt * static_cast<double>(i) << ',' << x.s << ',' << x.d << ',' << x.v << ',' << x.a << ','
        << x.d_rate << '\n';
  }
  return out.str();
}

inline nlohmann::json costBreakdown(const PlanResult& r) {
  const SampleCost& c = r.costs.at(r.index);
  nlohmann::json rules = nlohmann::json::object();
  for (const auto& rs : c.rules) rules[rs.rule] = rs.rho;
  std::size_t free = 0;
  for (const auto& x : r.costs) free += x.collisionFree;
  return {{"sample", r.index},
          {"grid", {r.trajectory.grid[0], r.trajectory.grid[1], r.trajectory.grid[2]}},
          {"lambda_r", r.lambda},
          {"J", c.performance.total - r.lambda * c.jr},
          {"J_p", c.performance.total},
          {"J_r", c.jr},
          {"jerk", c.performance.jerk},
          {"speed", c.performance.speed},
          {"lateral", c.performance.lateral},
          {"rules", rules},
          {"clearance", c.clearance},
          {"feasible_samples", r.costs.size()},
          {"collision_free_samples", free},
          {"grid_size", r.gridSize}};
}

}  // namespace mpr::planner
