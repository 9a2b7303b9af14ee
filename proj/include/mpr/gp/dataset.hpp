#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpr/error.hpp"
#include "mpr/gp/gp.hpp"
#include "mpr/predicates/features.hpp"
#include "mpr/robustness/mpr.hpp"
#include "mpr/scenario/io.hpp"
#include "mpr/synthetic.hpp"

namespace mpr::gp {

using predicates::PredicateDef;
using predicates::RuleParams;
using predicates::World;
using scenario::Scenario;

/// A query for a predicate: a recorded scenario, a step and the argument ids.
struct Instance {
  std::shared_ptr<const Scenario> scenario;
  std::size_t k = 0;
  std::vector<std::string> args;
  std::string source;
};

using InstanceSource = std::function<Instance(std::mt19937_64&)>;

struct DatasetRow {
  std::vector<double> z;
  double y = 0.0;
  int c = 1;
  double pBar = 0.0;
  std::string source;
  std::size_t k = 0;
  std::vector<std::string> args;
};

struct Dataset {
  static constexpr int kVersion = 1;
  std::string predicate;
  std::vector<std::string> featureSchema;
  robustness::NormalizationConstants norm;
  std::vector<DatasetRow> rows;

  MatrixXd inputs() const {
    MatrixXd Z(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(featureSchema.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < rows[i].z.size(); ++j) {
        Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i].z[j];
      }
    }
    return Z;
  }

  VectorXd outputs() const {
    VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = rows[i].y;
    return y;
  }
};

inline std::vector<std::string> instanceArgs(const PredicateDef& def, const Scenario& sc, std::mt19937_64& rng) {
  std::vector<std::string> args{std::string(scenario::kEgoId)};
  if (def.arity == 2) {
    const auto ids = sc.signal.otherIds();
    if (ids.empty()) throw InputError(def.name + " needs a second vehicle but the scenario has none");
    std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
    args.push_back(ids[pick(rng)]);
  }
  return args;
}

/// Draws a scenario from a fixed pool, a step with a full prediction horizon
/// after it, and (for two-vehicle predicates) a random other vehicle.
inline InstanceSource poolSource(const PredicateDef& def, std::vector<std::shared_ptr<const Scenario>> pool,
                                 std::vector<std::string> names, std::size_t horizon) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i]->signal.size() > horizon && (def.arity == 1 || !pool[i]->signal.otherIds().empty())) usable.push_back(i);
  }
  if (usable.empty()) throw InputError("no scenario is long enough for the prediction horizon");
  return [&def, pool = std::move(pool), names = std::move(names), usable, horizon](std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> which(0, usable.size() - 1);
    const std::size_t i = usable[which(rng)];
    Instance in;
    in.scenario = pool[i];
    std::uniform_int_distribution<std::size_t> step(0, in.scenario->signal.size() - 1 - horizon);
    in.k = step(rng);
    in.args = instanceArgs(def, *in.scenario, rng);
    in.source = i < names.size() ? names[i] : std::to_string(i);
    return in;
  };
}

/// Generates a fresh random scenario per instance.
inline InstanceSource syntheticSource(const PredicateDef& def, synthetic::Options opt, std::size_t horizon) {
  if (opt.steps <= horizon) opt.steps = horizon + 1;
  return [&def, opt, horizon](std::mt19937_64& rng) {
    auto sc = std::make_shared<const Scenario>(synthetic::randomScenario(rng, opt));
    Instance in;
    in.scenario = sc;
    std::uniform_int_distribution<std::size_t> step(0, sc->signal.size() - 1 - horizon);
    in.k = step(rng);
    in.args = instanceArgs(def, *sc, rng);
    in.source = "synthetic";
    return in;
  };
}

struct DatasetOptions {
  std::size_t size = 100;
  double minSignFraction = 0.2;  ///< each characteristic sign fills at least this share
  std::size_t maxAttemptsFactor = 20;
  bool keepScenarios = false;
};

struct GeneratedDataset {
  Dataset data;
  std::vector<Instance> instances;  ///< filled when keepScenarios is set
};

/// Labels instances with exact model predictive robustness. The normalization
/// constants are calibrated from the generated mean probabilities themselves.
inline GeneratedDataset generateDataset(const PredicateDef& def, const RuleParams& params,
                                        const sampler::SamplerConfig& cfg, const InstanceSource& source,
                                        std::mt19937_64& rng, const DatasetOptions& opt = {}) {
  if (opt.size < 2) throw InputError("dataset needs at least two rows");
  const auto minority = static_cast<std::size_t>(std::ceil(opt.minSignFraction * static_cast<double>(opt.size)));
  const std::size_t cap = opt.size - std::max<std::size_t>(1, minority);
  std::vector<robustness::ProbabilityEstimate> estimates;
  std::vector<Instance> kept;
  GeneratedDataset out;
  out.data.predicate = def.name;
  out.data.featureSchema = predicates::featureSchema(def);
  std::size_t plus = 0, minus = 0;
  const std::size_t attempts = opt.size * opt.maxAttemptsFactor;
  for (std::size_t a = 0; a < attempts && out.data.rows.size() < opt.size; ++a) {
    Instance in = source(rng);
    const World world{&in.scenario->road, predicates::resolveParams(params, in.scenario->vMax)};
    const auto& js = in.scenario->signal.at(in.k);
    const int c = def.holds(world, js, in.args) ? 1 : -1;
    if ((c == 1 ? plus : minus) >= cap) continue;
    robustness::ProbabilityEstimate est;
    try {
      est = robustness::estimateMeanProbability(def, world, in.scenario->signal, in.k, in.args, cfg);
    } catch (const robustness::EmptySampleSetError&) {
      continue;
    }
    DatasetRow row;
    row.z = predicates::extractFeatures(def, world, js, def.arity == 2 ? in.args[1] : std::string());
    row.c = c;
    row.pBar = est.pBar;
    row.source = in.source;
    row.k = in.k;
    row.args = in.args;
    (c == 1 ? plus : minus)++;
    estimates.push_back(est);
    out.data.rows.push_back(std::move(row));
    if (opt.keepScenarios) kept.push_back(std::move(in));
  }
  if (plus == 0 || minus == 0) {
    throw InputError("dataset for " + def.name + " cannot be stratified: scenarios only produce c = " +
                     std::string(plus > 0 ? "+1" : "-1") + " instances");
  }
  if (out.data.rows.size() < opt.size) {
    throw InputError("insufficient scenarios: produced " + std::to_string(out.data.rows.size()) + " of " +
                     std::to_string(opt.size) + " rows (c = +1: " + std::to_string(plus) +
                     ", c = -1: " + std::to_string(minus) + ")");
  }
  out.data.norm = robustness::calibrateNormalization(estimates);
  for (auto& row : out.data.rows) row.y = robustness::normalize(row.pBar, row.c, out.data.norm);
  out.instances = std::move(kept);
  return out;
}

inline nlohmann::json datasetToJson(const Dataset& d) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : d.rows) {
    rows.push_back({{"z", r.z}, {"y", r.y}, {"c", r.c}, {"p_bar", r.pBar}, {"source", r.source}, {"k", r.k}, {"args", r.args}});
  }
  return {{"version", Dataset::kVersion},
          {"predicate", d.predicate},
          {"featureSchema", d.featureSchema},
          {"norm", d.norm.toJson()},
          {"rows", rows}};
}

inline Dataset datasetFromJson(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != Dataset::kVersion) throw InputError("unsupported dataset version");
    Dataset d;
    d.predicate = j.at("predicate").get<std::string>();
    d.featureSchema = j.at("featureSchema").get<std::vector<std::string>>();
    d.norm = robustness::NormalizationConstants::fromJson(j.at("norm"));
    for (const auto& r : j.at("rows")) {
      DatasetRow row;
      row.z = r.at("z").get<std::vector<double>>();
      if (row.z.size() != d.featureSchema.size()) {
        throw InputError("dataset row " + std::to_string(d.rows.size()) + " has " + std::to_string(row.z.size()) +
                         " features, expected " + std::to_string(d.featureSchema.size()));
      }
      row.y = r.at("y").get<double>();
      row.c = r.at("c").get<int>();
      row.pBar = r.value("p_bar", 0.0);
      row.source = r.value("source", std::string());
      row.k = r.value("k", std::size_t{0});
      row.args = r.value("args", std::vector<std::string>{});
      d.rows.push_back(std::move(row));
    }
    if (d.rows.size() < 2) throw InputError("dataset needs at least two rows");
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("dataset file is corrupted: ") + e.what());
  }
}

/// Trained surrogate for the dataset's predicate.
inline RobustnessModel trainRobustnessModel(const Dataset& d, const TrainOptions& opt = {}) {
  RobustnessModel m;
  m.predicate = d.predicate;
  m.featureSchema = d.featureSchema;
  m.norm = d.norm;
  m.gp = trainGP(d.inputs(), d.outputs(), opt);
  return m;
}

struct RobustnessPrediction {
  double rho = 0.0;    ///< rectified mean
  double mean = 0.0;   ///< raw GP mean
  double sigma = 0.0;  ///< predictive standard deviation
  int c = 1;
};

/// Surrogate model predictive robustness of `def` at a joint state.
inline RobustnessPrediction predictRobustness(const RobustnessModel& model, const PredicateDef& def,
                                              const World& world, const scenario::JointState& js,
                                              std::string_view other = {}) {
  if (model.predicate != def.name) {
    throw InputError("model was trained for '" + model.predicate + "', not '" + def.name + "'");
  }
  const auto z = predicates::extractFeatures(def, world, js, other);
  const Eigen::Map<const VectorXd> zv(z.data(), static_cast<Eigen::Index>(z.size()));
  const Prediction p = model.gp.predict(zv);
  RobustnessPrediction r;
  r.c = z[0] > 0 ? 1 : -1;
  r.mean = p.mean;
  r.sigma = std::sqrt(p.variance);
  r.rho = rectifyPrediction(p.mean, r.c);
  return r;
}

}  // namespace mpr::gp
