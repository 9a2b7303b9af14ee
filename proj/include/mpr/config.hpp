#pragma once

#include <cstdlib>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpr/error.hpp"
#include "mpr/gp/dataset.hpp"
#include "mpr/gp/gp.hpp"
#include "mpr/planner/planner.hpp"
#include "mpr/predicates/predicates.hpp"
#include "mpr/robustness/mpr.hpp"
#include "mpr/sampler/sampler.hpp"

namespace mpr::config {

using nlohmann::json;

/// Environment variable naming a JSON config file.
inline constexpr const char* kConfigEnv = "MPR_CONFIG";

/// Every recognized key with its default. `null` marks optional numbers.
inline json defaults() {
  return {
      {"sampler",
       {{"horizon", 37}, {"dt", 0.04}, {"n_v", 9}, {"n_d", 9}, {"n_s", 9}, {"dv_min", -6.0}, {"dv_max", 6.0},
        {"d_span", 1.0}, {"ds_min", -2.0}, {"ds_max", 2.0}, {"a_max", 8.0}, {"v_min", 0.0}, {"v_max", 50.0},
        {"d_rate_max", 5.0}}},
      {"rules",
       {{"a_min", 10.0}, {"t_react", 0.4}, {"v_max", nullptr}, {"a_brake", -2.0}, {"mu", 1.2},
        {"sensor_range", 100.0}, {"rho_max", 1000.0}}},
      {"mpr", {{"p_plus_min", 0.0}, {"p_plus_max", 1.0}, {"p_minus_min", 0.0}, {"p_minus_max", 1.0}}},
      {"gp",
       {{"restarts", 5}, {"max_iterations", 200}, {"tolerance", 1e-6}, {"opt_subset", 500}, {"holdout", 0.2}}},
      {"dataset",
       {{"size", nullptr}, {"min_sign_fraction", 0.2}, {"max_attempts_factor", 20}, {"synthetic_steps", 80}}},
      {"planner",
       {{"dt", 0.2}, {"horizon", 30}, {"n_v", 10}, {"n_d", 5}, {"n_s", 9}, {"dv_min", -10.0}, {"dv_max", 6.0},
        {"d_span", 1.0}, {"ds_min", -4.0}, {"ds_max", 4.0}, {"lambda_r", 10.0}, {"w_jerk", 1.0}, {"w_speed", 1.0},
        {"w_lateral", 0.1}, {"target_speed", nullptr}, {"exact_leaves", false}, {"step", 0}}},
  };
}

/// Where each key's value came from.
enum class Source { Default, File, Flag };

inline const char* toString(Source s) {
  switch (s) {
    case Source::Default: return "default";
    case Source::File: return "file";
    case Source::Flag: return "flag";
  }
  return "?";
}

class RunConfig {
 public:
  RunConfig() : values_(defaults()) {
    for (const auto& [section, keys] : values_.items()) {
      for (const auto& [key, v] : keys.items()) sources_[section + "." + key] = Source::Default;
    }
  }

  /// Overlays a config document; unknown sections or keys are errors.
  void mergeFile(const json& doc, const std::string& origin = "config file") {
    if (!doc.is_object()) throw InputError(origin + ": top level must be an object");
    for (const auto& [section, keys] : doc.items()) {
      if (!keys.is_object()) throw InputError(origin + ": section '" + section + "' must be an object");
      for (const auto& [key, v] : keys.items()) assign(section + "." + key, v, Source::File, origin);
    }
  }

  /// Applies `section.key=value`; the value is parsed as JSON when possible.
  void set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json v = json::parse(text, nullptr, false);
    if (v.is_discarded()) v = text;
    assign(key, v, Source::Flag, "--set");
  }

  const json& values() const { return values_; }
  Source source(const std::string& key) const { return sources_.at(key); }

  /// Keys that differ from their defaults, with their sources.
  void log(std::ostream& out) const {
    for (const auto& [key, src] : sources_) {
      if (src == Source::Default) continue;
      out << "config: " << key << " = " << at(key).dump() << " (" << toString(src) << ")\n";
    }
  }

  double number(const std::string& key) const { return at(key).get<double>(); }
  std::size_t count(const std::string& key) const { return at(key).get<std::size_t>(); }
  std::optional<double> optionalNumber(const std::string& key) const {
    const json& v = at(key);
    return v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
  }

  sampler::SamplerConfig sampler() const {
    sampler::SamplerConfig c;
    c.horizon = count("sampler.horizon");
    c.dt = number("sampler.dt");
    c.nV = count("sampler.n_v");
    c.nD = count("sampler.n_d");
    c.nS = count("sampler.n_s");
    c.dv = {number("sampler.dv_min"), number("sampler.dv_max")};
    c.dSpan = number("sampler.d_span");
    c.ds = {number("sampler.ds_min"), number("sampler.ds_max")};
    c.limits = {number("sampler.a_max"), number("sampler.v_min"), number("sampler.v_max"),
                number("sampler.d_rate_max")};
    c.validate();
    return c;
  }

  predicates::RuleParams rules() const {
    predicates::RuleParams p;
    p.aMin = number("rules.a_min");
    p.tReact = number("rules.t_react");
    p.vMax = optionalNumber("rules.v_max");
    p.aBrake = number("rules.a_brake");
    p.mu = number("rules.mu");
    p.sensorRange = number("rules.sensor_range");
    p.rhoMax = number("rules.rho_max");
    if (!(p.aMin > 0)) throw InputError("rules.a_min must be positive");
    if (!(p.tReact >= 0)) throw InputError("rules.t_react must be nonnegative");
    if (!(p.sensorRange > 0)) throw InputError("rules.sensor_range must be positive");
    if (!(p.rhoMax > 0)) throw InputError("rules.rho_max must be positive");
    return p;
  }

  robustness::NormalizationConstants norm() const {
    robustness::NormalizationConstants n{number("mpr.p_plus_min"), number("mpr.p_plus_max"), number("mpr.p_minus_min"),
                                         number("mpr.p_minus_max")};
    n.validate();
    return n;
  }

  gp::TrainOptions train(std::uint64_t seed) const {
    gp::TrainOptions o;
    o.restarts = static_cast<int>(count("gp.restarts"));
    o.maxIterations = static_cast<int>(count("gp.max_iterations"));
    o.tolerance = number("gp.tolerance");
    o.optimizationSubset = count("gp.opt_subset");
    o.seed = seed;
    if (o.restarts < 1) throw InputError("gp.restarts must be at least 1");
    return o;
  }

  double holdout() const {
    const double h = number("gp.holdout");
    if (!(h >= 0.0 && h < 1.0)) throw InputError("gp.holdout must lie in [0, 1)");
    return h;
  }

  /// Dataset size: the configured value, else 10000 rows for two-vehicle
  /// predicates and 3000 otherwise.
  std::size_t datasetSize(const predicates::PredicateDef& def) const {
    if (!at("dataset.size").is_null()) return count("dataset.size");
    return def.arity == 2 ? 10000 : 3000;
  }

  gp::DatasetOptions dataset(const predicates::PredicateDef& def) const {
    gp::DatasetOptions o;
    o.size = datasetSize(def);
    o.minSignFraction = number("dataset.min_sign_fraction");
    o.maxAttemptsFactor = count("dataset.max_attempts_factor");
    if (!(o.minSignFraction > 0.0 && o.minSignFraction <= 0.5)) {
      throw InputError("dataset.min_sign_fraction must lie in (0, 0.5]");
    }
    return o;
  }

  planner::PlannerConfig planner() const {
    planner::PlannerConfig c;
    c.dt = number("planner.dt");
    c.horizon = count("planner.horizon");
    c.nV = count("planner.n_v");
    c.nD = count("planner.n_d");
    c.nS = count("planner.n_s");
    c.dv = {number("planner.dv_min"), number("planner.dv_max")};
    c.dSpan = number("planner.d_span");
    c.ds = {number("planner.ds_min"), number("planner.ds_max")};
    c.limits = sampler().limits;
    c.lambdaR = number("planner.lambda_r");
    c.weights = {number("planner.w_jerk"), number("planner.w_speed"), number("planner.w_lateral")};
    c.targetSpeed = optionalNumber("planner.target_speed");
    c.exactLeaves = at("planner.exact_leaves").get<bool>();
    c.validate();
    c.samplerConfig().validate();
    return c;
  }

 private:
  const json& at(const std::string& key) const {
    const auto dot = key.find('.');
    return values_.at(key.substr(0, dot)).at(key.substr(dot + 1));
  }

  void assign(const std::string& key, const json& v, Source src, const std::string& origin) {
    const auto dot = key.find('.');
    if (dot == std::string::npos || !sources_.count(key)) throw InputError(origin + ": unknown config key '" + key + "'");
    json& slot = values_[key.substr(0, dot)][key.substr(dot + 1)];
    const json def = defaults()[key.substr(0, dot)][key.substr(dot + 1)];
    const bool ok = def.is_boolean() ? v.is_boolean()
                    : def.is_number_integer() ? (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0))
                    : def.is_null() ? (v.is_null() || v.is_number())
                                      : v.is_number();
    if (!ok) {
      throw InputError(origin + ": config key '" + key + "' expects " +
                       (def.is_boolean() ? "a boolean"
                        : def.is_number_integer() ? "a nonnegative integer"
                        : def.is_null() ? "a number or null"
                                          : "a number") +
                       ", got " + v.dump());
    }
    slot = v;
    sources_[key] = src;
  }

  json values_;
  std::map<std::string, Source> sources_;
};

/// Defaults, then the file named by `path` (or by MPR_CONFIG when empty),
/// then the `--set` assignments.
inline RunConfig loadConfig(std::string path, const std::vector<std::string>& assignments) {
  RunConfig cfg;
  if (path.empty()) {
    if (const char* env = std::getenv(kConfigEnv)) path = env;
  }
  if (!path.empty()) cfg.mergeFile(scenario::readJsonFile(path), path);
  for (const auto& a : assignments) cfg.set(a);
  return cfg;
}

}  // namespace mpr::config
