#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mpr/error.hpp"
#include "mpr/sampler/quintic.hpp"
#include "mpr/scenario/road.hpp"
#include "mpr/scenario/state.hpp"

namespace mpr::sampler {

using scenario::JointState;
using scenario::Road;
using scenario::Signal;
using scenario::VehicleState;

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct KinematicLimits {
  double aMax = 8.0;       ///< |a| bound [m/s^2]
  double vMin = 0.0;       ///< [m/s]
  double vMax = 50.0;      ///< [m/s]
  double dRateMax = 5.0;   ///< |d'| bound [m/s]
};

/// Terminal-state grid and limits for ego trajectory samples. Terminal
/// lateral targets are the ego's center-lane centerline plus offsets spread
/// over [-dSpan, dSpan] lane widths.
struct SamplerConfig {
  std::size_t horizon = 37;  ///< steps h
  double dt = 0.04;          ///< [s]
  std::size_t nV = 9;
  std::size_t nD = 9;
  std::size_t nS = 9;
  Range dv{-6.0, 6.0};       ///< terminal speed change [m/s]
  double dSpan = 1.0;        ///< lateral target span [lane widths]
  Range ds{-2.0, 2.0};       ///< terminal offset from the average-speed position [m]
  KinematicLimits limits;

  double duration() const { return static_cast<double>(horizon) * dt; }

  void validate() const {
    if (horizon < 1) throw InputError("sampler.horizon must be at least 1");
    if (!(dt > 0.0)) throw InputError("sampler.dt must be positive");
    if (nV < 1 || nD < 1 || nS < 1) throw InputError("sampler grid sizes must be at least 1");
    if (dv.lo > dv.hi || ds.lo > ds.hi) throw InputError("sampler ranges must satisfy lo <= hi");
    if (!(dSpan >= 0.0)) throw InputError("sampler.d_span must be nonnegative");
    if (limits.vMin > limits.vMax) throw InputError("sampler.v_min exceeds sampler.v_max");
  }
};

/// Trajectory over steps k..k+h; `grid` holds the terminal-grid indices (v, d, s).
struct TrajectorySample {
  std::vector<VehicleState> states;
  std::array<std::size_t, 3> grid{};
  Quintic lon;
  Quintic lat;
};

/// n evenly spaced values over [lo, hi]; the midpoint when n = 1.
inline std::vector<double> linspace(Range r, std::size_t n) {
  std::vector<double> out;
  if (n == 1) return {0.5 * (r.lo + r.hi)};
  for (std::size_t i = 0; i < n; ++i) out.push_back(r.lo + (r.hi - r.lo) * static_cast<double>(i) / (n - 1));
  return out;
}

/// Samples a pair of quintics at steps 0..h; step 0 is `start` verbatim.
inline TrajectorySample tabulate(const VehicleState& start, const Quintic& lon, const Quintic& lat,
                                 std::size_t horizon, double dt) {
  TrajectorySample out;
  out.lon = lon;
  out.lat = lat;
  out.states.reserve(horizon + 1);
  out.states.push_back(start);
  for (std::size_t i = 1; i <= horizon; ++i) {
    const double t = static_cast<double>(i) * dt;
    VehicleState x = start;
    x.s = lon.position(t);
    x.v = lon.velocity(t);
    x.a = lon.acceleration(t);
    x.d = lat.position(t);
    x.d_rate = lat.velocity(t);
    x.d_acc = lat.acceleration(t);
    out.states.push_back(x);
  }
  return out;
}

/// Every step within the kinematic limits and the footprint inside the road.
inline bool checkFeasibility(const TrajectorySample& sample, const KinematicLimits& limits, const Road& road) {
  for (const VehicleState& x : sample.states) {
    if (x.v < limits.vMin || x.v > limits.vMax) return false;
    if (std::abs(x.a) > limits.aMax) return false;
    if (std::abs(x.d_rate) > limits.dRateMax) return false;
    if (x.s < 0.0 || x.s > road.frame().length()) return false;
    if (road.roadClearance(road.footprint(x)) < 0.0) return false;
  }
  return true;
}

/// Terminal lateral targets around the centerline of the ego's center lane.
inline std::vector<double> lateralTargets(const VehicleState& ego, const Road& road, const SamplerConfig& cfg) {
  const double center = road.centerLaneOffset(ego);
  const double w = road.laneWidth(road.centerLaneIndex(ego));
  std::vector<double> out;
  for (double off : linspace({-cfg.dSpan * w, cfg.dSpan * w}, cfg.nD)) out.push_back(center + off);
  return out;
}

/// All terminal-grid samples in grid order, feasible or not.
inline std::vector<TrajectorySample> gridTrajectories(const VehicleState& ego, const Road& road,
                                                      const SamplerConfig& cfg) {
  cfg.validate();
  const double T = cfg.duration();
  const auto dvs = linspace(cfg.dv, cfg.nV);
  const auto dss = linspace(cfg.ds, cfg.nS);
  const auto ds = lateralTargets(ego, road, cfg);
  std::vector<TrajectorySample> out;
  out.reserve(cfg.nV * cfg.nD * cfg.nS);
  const BoundaryState lonStart{ego.s, ego.v, ego.a};
  const BoundaryState latStart{ego.d, ego.d_rate, ego.d_acc};
  for (std::size_t iv = 0; iv < dvs.size(); ++iv) {
    const double vEnd = ego.v + dvs[iv];
    for (std::size_t id = 0; id < ds.size(); ++id) {
      const Quintic lat = quinticConnect(latStart, {ds[id], 0.0, 0.0}, T);
      for (std::size_t is = 0; is < dss.size(); ++is) {
        const double sEnd = ego.s + 0.5 * (ego.v + vEnd) * T + dss[is];
        const Quintic lon = quinticConnect(lonStart, {sEnd, vEnd, 0.0}, T);
        TrajectorySample s = tabulate(ego, lon, lat, cfg.horizon, cfg.dt);
        s.grid = {iv, id, is};
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

/// Feasible ego samples in deterministic grid order. May be empty.
inline std::vector<TrajectorySample> sampleEgoTrajectories(const JointState& omega, const Road& road,
                                                           const SamplerConfig& cfg) {
  std::vector<TrajectorySample> out;
  for (auto& s : gridTrajectories(omega.ego, road, cfg)) {
    if (checkFeasibility(s, cfg.limits, road)) out.push_back(std::move(s));
  }
  return out;
}

/// Recorded states of the given non-ego vehicles over steps k..k+h.
inline std::map<std::string, std::vector<VehicleState>> mostLikelyTrajectories(const Signal& signal, std::size_t k,
                                                                             std::size_t horizon,
                                                                             const std::vector<std::string>& ids) {
  std::map<std::string, std::vector<VehicleState>> out;
  if (ids.empty()) return out;
  if (k + horizon >= signal.size()) {
    std::string list;
    for (const auto& id : ids) list += (list.empty() ? "" : ", ") + id;
    throw InputError("recording ends at step " + std::to_string(signal.size() - 1) + " before step " +
                     std::to_string(k + horizon) + " for vehicles: " + list);
  }
  for (const auto& id : ids) {
    auto& traj = out[id];
    for (std::size_t t = k; t <= k + horizon; ++t) traj.push_back(signal[t].at(id));
  }
  return out;
}

/// Recorded states of every non-ego vehicle over steps k..k+h.
inline std::map<std::string, std::vector<VehicleState>> mostLikelyTrajectories(const Signal& signal, std::size_t k,
                                                                             std::size_t horizon) {
  return mostLikelyTrajectories(signal, k, horizon, signal.otherIds());
}

/// Joint state at offset tau of an ego sample combined with the other vehicles' futures.
inline JointState jointAt(const std::vector<VehicleState>& ego,
                          const std::map<std::string, std::vector<VehicleState>>& others,
                          const std::vector<std::string>& order, std::size_t tau) {
  JointState js;
  js.ego = ego[tau];
  js.others.reserve(order.size());
  for (const auto& id : order) js.others.push_back({id, others.at(id)[tau]});
  return js;
}

}  // namespace mpr::sampler
