#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpr/error.hpp"
#include "mpr/scenario/road.hpp"
#include "mpr/scenario/state.hpp"

namespace mpr::scenario {

/// A road plus a recorded signal. `vMax` is the posted speed limit, when given.
struct Scenario {
  Road road;
  Signal signal;
  std::optional<double> vMax;
  double t0 = 0.0;
};

/// Fills `d_rate` and `d_acc` from the lateral positions by finite differences
/// (central inside, one-sided at the ends).
inline void deriveLateralRates(std::vector<JointState>& states, double dt) {
  const std::size_t n = states.size();
  auto gradient = [&](auto get, auto set) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j <= states[k].others.size(); ++j) {
        auto pick = [&](std::size_t step) -> VehicleState& {
          return j == 0 ? states[step].ego : states[step].others[j - 1].state;
        };
        double g = 0.0;
        if (n > 1) {
          if (k == 0) g = (get(pick(1)) - get(pick(0))) / dt;
          else if (k + 1 == n) g = (get(pick(n - 1)) - get(pick(n - 2))) / dt;
          else g = (get(pick(k + 1)) - get(pick(k - 1))) / (2.0 * dt);
        }
        set(pick(k), g);
      }
    }
  };
  gradient([](const VehicleState& s) { return s.d; }, [](VehicleState& s, double g) { s.d_rate = g; });
  gradient([](const VehicleState& s) { return s.d_rate; }, [](VehicleState& s, double g) { s.d_acc = g; });
}

namespace detail {

using nlohmann::json;

inline void rejectUnknown(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw InputError(path + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) known = known || it.key() == a;
    if (!known) throw InputError(path + "." + it.key() + ": unknown field");
  }
}

inline const json& require(const json& obj, const std::string& path, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw InputError(path + "." + key + ": missing field");
  return *it;
}

inline double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw InputError(path + ": expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw InputError(path + ": not finite");
  return x;
}

inline int integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw InputError(path + ": expected an integer");
  return v.get<int>();
}

inline std::vector<Vec2> polyline(const json& v, const std::string& path) {
  if (!v.is_array()) throw InputError(path + ": expected an array of [x, y] points");
  std::vector<Vec2> pts;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!v[i].is_array() || v[i].size() != 2) throw InputError(p + ": expected [x, y]");
    pts.push_back({number(v[i][0], p + "[0]"), number(v[i][1], p + "[1]")});
  }
  return pts;
}

inline std::optional<int> optionalLane(const json& obj, const std::string& path, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return integer(*it, path + "." + key);
}

template <class F>
auto withPath(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

}  // namespace detail

/// Parses a scenario document. Unknown fields are rejected and every error
/// names the offending field path.
inline Scenario parseScenario(const nlohmann::json& doc) {
  using detail::json;
  detail::rejectUnknown(doc, "$", {"lanes", "boundaries", "vehicles", "dt", "v_max", "reference_lane"});

  LaneNetwork net;
  const json& lanes = detail::require(doc, "$", "lanes");
  if (!lanes.is_array() || lanes.empty()) throw InputError("$.lanes: expected a nonempty array");
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const std::string p = "$.lanes[" + std::to_string(i) + "]";
    detail::rejectUnknown(lanes[i], p, {"id", "centerline", "width", "left", "right"});
    Lane lane;
    lane.id = detail::integer(detail::require(lanes[i], p, "id"), p + ".id");
    lane.centerline = detail::polyline(detail::require(lanes[i], p, "centerline"), p + ".centerline");
    lane.width = detail::number(detail::require(lanes[i], p, "width"), p + ".width");
    if (!(lane.width > 0.0)) throw InputError(p + ".width: must be positive");
    lane.left = detail::optionalLane(lanes[i], p, "left");
    lane.right = detail::optionalLane(lanes[i], p, "right");
    net.lanes.push_back(std::move(lane));
  }
  if (auto it = doc.find("boundaries"); it != doc.end()) {
    detail::rejectUnknown(*it, "$.boundaries", {"left", "right"});
    if (it->contains("left")) net.leftBoundary = detail::polyline((*it)["left"], "$.boundaries.left");
    if (it->contains("right")) net.rightBoundary = detail::polyline((*it)["right"], "$.boundaries.right");
  }

  std::optional<int> reference;
  if (auto it = doc.find("reference_lane"); it != doc.end()) reference = detail::integer(*it, "$.reference_lane");

  Scenario sc;
  sc.road = detail::withPath("$.lanes", [&] { return Road(net, reference); });
  if (auto it = doc.find("v_max"); it != doc.end()) {
    sc.vMax = detail::number(*it, "$.v_max");
    if (!(*sc.vMax > 0.0)) throw InputError("$.v_max: must be positive");
  }
  const double dt = detail::number(detail::require(doc, "$", "dt"), "$.dt");
  if (!(dt > 0.0)) throw InputError("$.dt: must be positive");

  const json& vehicles = detail::require(doc, "$", "vehicles");
  if (!vehicles.is_array() || vehicles.empty()) throw InputError("$.vehicles: expected a nonempty array");
  std::set<std::string> seen;
  std::vector<double> times;
  std::vector<JointState> states;
  bool haveEgo = false;
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    const std::string p = "$.vehicles[" + std::to_string(i) + "]";
    detail::rejectUnknown(vehicles[i], p, {"id", "l", "w", "trace"});
    const json& idv = detail::require(vehicles[i], p, "id");
    std::string id;
    if (idv.is_string()) id = idv.get<std::string>();
    else if (idv.is_number_integer()) id = std::to_string(idv.get<long long>());
    else throw InputError(p + ".id: expected a string or integer");
    if (id.empty()) throw InputError(p + ".id: empty");
    if (!seen.insert(id).second) throw InputError(p + ".id: duplicate vehicle id '" + id + "'");
    const double l = detail::number(detail::require(vehicles[i], p, "l"), p + ".l");
    const double w = detail::number(detail::require(vehicles[i], p, "w"), p + ".w");
    if (!(l > 0.0)) throw InputError(p + ".l: must be positive");
    if (!(w > 0.0)) throw InputError(p + ".w: must be positive");
    const json& trace = detail::require(vehicles[i], p, "trace");
    if (!trace.is_array() || trace.empty()) throw InputError(p + ".trace: expected a nonempty array");

    const bool first = times.empty();
    if (!first && trace.size() != times.size()) {
      throw InputError(p + ".trace: has " + std::to_string(trace.size()) + " samples, expected " +
                       std::to_string(times.size()));
    }
    if (first) states.resize(trace.size());
    for (std::size_t k = 0; k < trace.size(); ++k) {
      const std::string q = p + ".trace[" + std::to_string(k) + "]";
      if (!trace[k].is_array() || trace[k].size() != 5) throw InputError(q + ": expected [t, s, d, v, a]");
      const double t = detail::number(trace[k][0], q + "[0]");
      if (first) {
        if (k > 0 && !(t > times.back())) throw InputError(q + "[0]: non-monotone timestamp");
        if (k > 0 && std::abs((t - times.back()) - dt) > 1e-6 * std::max(1.0, dt)) {
          throw InputError(q + "[0]: timestamp spacing differs from dt");
        }
        times.push_back(t);
      } else if (std::abs(t - times[k]) > 1e-9 * std::max(1.0, std::abs(t))) {
        throw InputError(q + "[0]: timestamp does not match the other vehicles");
      }
      VehicleState st;
      st.s = detail::number(trace[k][1], q + "[1]");
      st.d = detail::number(trace[k][2], q + "[2]");
      st.v = detail::number(trace[k][3], q + "[3]");
      st.a = detail::number(trace[k][4], q + "[4]");
      st.length = l;
      st.width = w;
      if (id == kEgoId) states[k].ego = st;
      else states[k].others.push_back({id, st});
    }
    haveEgo = haveEgo || id == kEgoId;
  }
  if (!haveEgo) throw InputError("$.vehicles: no vehicle with id 'ego'");
  deriveLateralRates(states, dt);
  sc.t0 = times.front();
  sc.signal = Signal(std::move(states), dt);
  return sc;
}

inline std::string readTextFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json readJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline Scenario loadScenario(const std::string& path) {
  const auto doc = readJsonFile(path);
  try {
    return parseScenario(doc);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline nlohmann::json scenarioToJson(const Scenario& sc) {
  using nlohmann::json;
  json doc;
  auto points = [](const std::vector<Vec2>& pts) {
    json arr = json::array();
    for (Vec2 p : pts) arr.push_back({p.x, p.y});
    return arr;
  };
  json lanes = json::array();
  for (const Lane& lane : sc.road.network().lanes) {
    json l{{"id", lane.id}, {"centerline", points(lane.centerline)}, {"width", lane.width}};
    if (lane.left) l["left"] = *lane.left;
    if (lane.right) l["right"] = *lane.right;
    lanes.push_back(l);
  }
  doc["lanes"] = lanes;
  doc["boundaries"] = {{"left", points(sc.road.network().leftBoundary)},
                       {"right", points(sc.road.network().rightBoundary)}};
  doc["reference_lane"] = sc.road.referenceLane();
  if (sc.vMax) doc["v_max"] = *sc.vMax;
  doc["dt"] = sc.signal.dt();

  json vehicles = json::array();
  auto addVehicle = [&](const std::string& id, auto get) {
    json trace = json::array();
    for (std::size_t k = 0; k < sc.signal.size(); ++k) {
      const VehicleState& s = get(sc.signal[k]);
      trace.push_back({sc.t0 + static_cast<double>(k) * sc.signal.dt(), s.s, s.d, s.v, s.a});
    }
    const VehicleState& s0 = get(sc.signal[0]);
    vehicles.push_back({{"id", id}, {"l", s0.length}, {"w", s0.width}, {"trace", trace}});
  };
  addVehicle(std::string(kEgoId), [](const JointState& js) -> const VehicleState& { return js.ego; });
  for (const std::string& id : sc.signal.otherIds()) {
    addVehicle(id, [&id](const JointState& js) -> const VehicleState& { return js.at(id); });
  }
  doc["vehicles"] = vehicles;
  return doc;
}

inline void writeTextFile(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path + "'");
}

inline void saveScenario(const Scenario& sc, const std::string& path) {
  writeTextFile(path, scenarioToJson(sc).dump(2) + "\n");
}

/// Trajectory CSV with columns frame,id,s,d,v,a,l,w.
inline std::string signalToCsv(const Signal& signal) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "frame,id,s,d,v,a,l,w\n";
  for (std::size_t k = 0; k < signal.size(); ++k) {
    auto row = [&](const std::string& id, const VehicleState& s) {
      out << k << ',' << id << ',' << s.s << ',' << s.d << ',' << s.v << ',' << s.a << ',' << s.length << ','
          << s.width << '\n';
    };
    row(std::string(kEgoId), signal[k].ego);
    for (const Agent& o : signal[k].others) row(o.id, o.state);
  }
  return out.str();
}

inline void saveSignalCSV(const Signal& signal, const std::string& path) { writeTextFile(path, signalToCsv(signal)); }

inline Signal parseSignalCsv(const std::string& text, double dt) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "frame,id,s,d,v,a,l,w") {
    throw InputError("csv header must be 'frame,id,s,d,v,a,l,w'");
  }
  std::map<long long, JointState> frames;
  std::map<long long, std::set<std::string>> seen;
  std::size_t lineNo = 1;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    const std::string where = "csv line " + std::to_string(lineNo);
    if (cells.size() != 8) throw InputError(where + ": expected 8 columns");
    auto num = [&](std::size_t c) {
      try {
        std::size_t used = 0;
        const double x = std::stod(cells[c], &used);
        if (used != cells[c].size() || !std::isfinite(x)) throw std::invalid_argument("");
        return x;
      } catch (const std::exception&) {
        throw InputError(where + ": column " + std::to_string(c + 1) + " is not a number");
      }
    };
    long long frame = 0;
    try {
      std::size_t used = 0;
      frame = std::stoll(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw InputError(where + ": frame is not an integer");
    }
    const std::string& id = cells[1];
    if (!seen[frame].insert(id).second) throw InputError(where + ": duplicate vehicle id '" + id + "'");
    VehicleState s{num(2), num(3), num(4), num(5), num(6), num(7)};
    if (!(s.length > 0.0) || !(s.width > 0.0)) throw InputError(where + ": l and w must be positive");
    if (id == kEgoId) frames[frame].ego = s;
    else frames[frame].others.push_back({id, s});
  }
  if (frames.empty()) throw InputError("csv contains no rows");
  std::vector<JointState> states;
  long long expect = frames.begin()->first;
  for (auto& [frame, js] : frames) {
    if (frame != expect) throw InputError("csv frames are not consecutive at frame " + std::to_string(frame));
    if (!seen[frame].count(std::string(kEgoId))) throw InputError("csv frame " + std::to_string(frame) + " has no ego");
    states.push_back(std::move(js));
    ++expect;
  }
  deriveLateralRates(states, dt);
  return Signal(std::move(states), dt);
}

inline Signal loadSignalCSV(const std::string& path, double dt) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parseSignalCsv(buf.str(), dt);
}

}  // namespace mpr::scenario
