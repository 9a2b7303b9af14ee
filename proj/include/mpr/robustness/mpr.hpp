#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpr/error.hpp"
#include "mpr/predicates/predicates.hpp"
#include "mpr/sampler/sampler.hpp"
#include "mpr/scenario/state.hpp"

namespace mpr::robustness {

using predicates::PredicateDef;
using predicates::Registry;
using predicates::World;
using scenario::JointState;
using scenario::Signal;
using scenario::VehicleState;

/// Raised when the sampler leaves no feasible ego trajectory.
class EmptySampleSetError : public InputError {
 public:
  using InputError::InputError;
};

/// Extremes of the mean preservation probability for satisfied (+) and
/// violated (-) instances of a predicate.
struct NormalizationConstants {
  double pPlusMin = 0.0;
  double pPlusMax = 1.0;
  double pMinusMin = 0.0;
  double pMinusMax = 1.0;

  void validate() const {
    for (double p : {pPlusMin, pPlusMax, pMinusMin, pMinusMax}) {
      if (!(p >= 0.0 && p <= 1.0)) throw InputError("normalization constants must lie in [0, 1]");
    }
    if (!(pPlusMin < pPlusMax)) throw InputError("normalization requires p_plus_min < p_plus_max");
    if (!(pMinusMin < pMinusMax)) throw InputError("normalization requires p_minus_min < p_minus_max");
  }

  nlohmann::json toJson() const {
    return {{"p_plus_min", pPlusMin}, {"p_plus_max", pPlusMax}, {"p_minus_min", pMinusMin}, {"p_minus_max", pMinusMax}};
  }

  static NormalizationConstants fromJson(const nlohmann::json& j) {
    NormalizationConstants n;
    try {
      n.pPlusMin = j.at("p_plus_min").get<double>();
      n.pPlusMax = j.at("p_plus_max").get<double>();
      n.pMinusMin = j.at("p_minus_min").get<double>();
      n.pMinusMax = j.at("p_minus_max").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("normalization constants: ") + e.what());
    }
    n.validate();
    return n;
  }
};

/// Maps a mean preservation probability onto [-1, 1] with the sign of `c`.
/// Values outside the calibrated range are clipped to the sign's half
/// interval; `clipped` reports whether that happened.
inline double normalize(double pBar, int c, const NormalizationConstants& n, bool* clipped = nullptr) {
  double r;
  double lo, hi;
  if (c == 1) {
    r = (pBar - n.pPlusMin) / (n.pPlusMax - n.pPlusMin);
    lo = 0.0;
    hi = 1.0;
  } else if (c == -1) {
    r = -(pBar - n.pMinusMin) / (n.pMinusMax - n.pMinusMin);
    lo = -1.0;
    hi = 0.0;
  } else {
    throw InputError("characteristic value must be +1 or -1");
  }
  const double out = std::clamp(r, lo, hi);
  if (clipped) *clipped = out != r;
  return out;
}

/// Predicted joint states: every ego sample paired with the single
/// most-likely trajectory of each relevant other vehicle.
class PredictedSignalSet {
 public:
  PredictedSignalSet(std::vector<std::vector<VehicleState>> ego,
                     std::map<std::string, std::vector<VehicleState>> others)
      : ego_(std::move(ego)), others_(std::move(others)) {
    if (ego_.empty()) throw EmptySampleSetError("no feasible ego trajectory sample");
    steps_ = ego_.front().size();
    for (const auto& e : ego_) {
      if (e.size() != steps_) throw InputError("ego samples differ in length");
    }
    for (const auto& [id, traj] : others_) {
      if (traj.size() != steps_) throw InputError("trajectory of vehicle '" + id + "' differs in length");
      order_.push_back(id);
    }
  }

  std::size_t size() const noexcept { return ego_.size(); }
  /// Number of steps, h + 1.
  std::size_t steps() const noexcept { return steps_; }
  const std::vector<std::string>& otherIds() const noexcept { return order_; }

  JointState at(std::size_t member, std::size_t tau) const {
    return sampler::jointAt(ego_[member], others_, order_, tau);
  }

 private:
  std::vector<std::vector<VehicleState>> ego_;
  std::map<std::string, std::vector<VehicleState>> others_;
  std::vector<std::string> order_;
  std::size_t steps_ = 0;
};

inline PredictedSignalSet buildPredictedSignals(const std::vector<sampler::TrajectorySample>& egoSamples,
                                                std::map<std::string, std::vector<VehicleState>> others) {
  std::vector<std::vector<VehicleState>> ego;
  ego.reserve(egoSamples.size());
  for (const auto& s : egoSamples) ego.push_back(s.states);
  return PredictedSignalSet(std::move(ego), std::move(others));
}

/// Fraction of members whose characteristic value at offset tau equals cRef.
inline double estimateStepProbability(const PredicateDef& def, const World& world, const PredictedSignalSet& set,
                                      std::size_t tau, int cRef, std::span<const std::string> args) {
  if (set.size() == 0) throw EmptySampleSetError("empty predicted signal set");
  std::size_t same = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const bool h = def.holds(world, set.at(i, tau), args);
    if ((h ? 1 : -1) == cRef) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(set.size());
}

struct ProbabilityEstimate {
  double pBar = 0.0;
  int c = 1;
  std::size_t samples = 0;
  std::vector<double> stepProbabilities;
};

/// Mean over offsets 0..h of the step probabilities.
inline ProbabilityEstimate meanProbability(const PredicateDef& def, const World& world, const PredictedSignalSet& set,
                                           int cRef, std::span<const std::string> args) {
  ProbabilityEstimate est;
  est.c = cRef;
  est.samples = set.size();
  double sum = 0.0;
  for (std::size_t tau = 0; tau < set.steps(); ++tau) {
    est.stepProbabilities.push_back(estimateStepProbability(def, world, set, tau, cRef, args));
    sum += est.stepProbabilities.back();
  }
  est.pBar = sum / static_cast<double>(set.steps());
  return est;
}

/// Vehicles whose futures the predicate can observe: its non-ego arguments,
/// or for contextual predicates every vehicle within sensor range.
inline std::vector<std::string> relevantVehicles(const PredicateDef& def, const World& world, const JointState& js,
                                                 std::span<const std::string> args) {
  std::vector<std::string> ids;
  if (def.contextual) {
    for (const auto& o : js.others) {
      if (std::abs(o.state.s - js.ego.s) <= world.params.sensorRange) ids.push_back(o.id);
    }
  } else {
    for (std::size_t i = 1; i < args.size(); ++i) {
      if (args[i] != scenario::kEgoId) ids.push_back(args[i]);
    }
  }
  return ids;
}

/// Samples ego futures at step k of a recorded signal, pairs them with the
/// recorded futures of the relevant vehicles and estimates the mean
/// preservation probability. The sampler's step is taken from the signal.
inline ProbabilityEstimate estimateMeanProbability(const PredicateDef& def, const World& world, const Signal& signal,
                                                   std::size_t k, std::span<const std::string> args,
                                                   sampler::SamplerConfig cfg) {
  if (args.empty() || args[0] != scenario::kEgoId) {
    throw InputError(def.name + ": model predictive robustness needs the ego vehicle as first argument");
  }
  if (args.size() != def.arity) throw InputError(def.name + ": wrong number of arguments");
  const JointState& omega = signal.at(k);
  cfg.dt = signal.dt();
  const int c = def.holds(world, omega, args) ? 1 : -1;
  auto samples = sampler::sampleEgoTrajectories(omega, *world.road, cfg);
  if (samples.empty()) {
    throw EmptySampleSetError("no feasible ego trajectory sample at step " + std::to_string(k));
  }
  auto others = sampler::mostLikelyTrajectories(signal, k, cfg.horizon, relevantVehicles(def, world, omega, args));
  const PredictedSignalSet set = buildPredictedSignals(samples, std::move(others));
  return meanProbability(def, world, set, c, args);
}

struct MprResult {
  double rho = 0.0;
  double pBar = 0.0;
  int c = 1;
  bool clipped = false;
  std::size_t samples = 0;
};

inline MprResult computeMPR(const PredicateDef& def, const World& world, const Signal& signal, std::size_t k,
                            std::span<const std::string> args, const sampler::SamplerConfig& cfg,
                            const NormalizationConstants& norm) {
  const ProbabilityEstimate est = estimateMeanProbability(def, world, signal, k, args, cfg);
  MprResult r;
  r.pBar = est.pBar;
  r.c = est.c;
  r.samples = est.samples;
  r.rho = normalize(est.pBar, est.c, norm, &r.clipped);
  return r;
}

/// Per-sign extremes of the mean probabilities, widened by eps and kept in [0, 1].
inline NormalizationConstants calibrateNormalization(std::span<const ProbabilityEstimate> estimates,
                                                     double eps = 1e-3) {
  double plusMin = std::numeric_limits<double>::infinity(), plusMax = -plusMin;
  double minusMin = plusMin, minusMax = -plusMin;
  for (const auto& e : estimates) {
    if (e.c == 1) {
      plusMin = std::min(plusMin, e.pBar);
      plusMax = std::max(plusMax, e.pBar);
    } else {
      minusMin = std::min(minusMin, e.pBar);
      minusMax = std::max(minusMax, e.pBar);
    }
  }
  if (!std::isfinite(plusMin)) throw InputError("calibration data has no satisfying (c = +1) instance");
  if (!std::isfinite(minusMin)) throw InputError("calibration data has no violating (c = -1) instance");
  NormalizationConstants n;
  n.pPlusMin = std::max(0.0, plusMin - eps);
  n.pPlusMax = std::min(1.0, plusMax + eps);
  n.pMinusMin = std::max(0.0, minusMin - eps);
  n.pMinusMax = std::min(1.0, minusMax + eps);
  n.validate();
  return n;
}

}  // namespace mpr::robustness
