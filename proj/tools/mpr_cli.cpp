#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mpr/config.hpp"
#include "mpr/error.hpp"
#include "mpr/gp/dataset.hpp"
#include "mpr/gp/gp.hpp"
#include "mpr/planner/planner.hpp"
#include "mpr/predicates/features.hpp"
#include "mpr/predicates/predicates.hpp"
#include "mpr/predicates/rules.hpp"
#include "mpr/robustness/mpr.hpp"
#include "mpr/scenario/io.hpp"
#include "mpr/stl/parser.hpp"
#include "mpr/stl/semantics.hpp"
#include "mpr/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace mpr;

struct Globals {
  std::string configPath;
  std::vector<std::string> sets;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
};

config::RunConfig loadConfig(const Globals& g) {
  auto cfg = config::loadConfig(g.configPath, g.sets);
  cfg.log(std::cerr);
  std::cerr << "config: seed = " << g.seed << ", jobs = " << g.jobs << " (single-threaded)\n";
  return cfg;
}

std::vector<fs::path> scenarioFiles(const std::string& dir) {
  if (!fs::is_directory(dir)) throw InputError("'" + dir + "' is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw InputError("no scenario files (*.json) in '" + dir + "'");
  return out;
}

std::vector<std::string> splitIds(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> defaultArgs(const predicates::PredicateDef& def, const scenario::Scenario& sc,
                                     const std::string& argsText) {
  if (!argsText.empty()) return splitIds(argsText);
  std::vector<std::string> args{std::string(scenario::kEgoId)};
  if (def.arity == 2) {
    const auto ids = sc.signal.otherIds();
    if (ids.empty()) throw InputError(def.name + " needs a second vehicle but the scenario has none");
    args.push_back(ids.front());
  }
  return args;
}

std::map<std::string, std::shared_ptr<const gp::RobustnessModel>> loadModels(const std::string& dir) {
  if (!fs::is_directory(dir)) throw InputError("'" + dir + "' is not a directory");
  std::map<std::string, std::shared_ptr<const gp::RobustnessModel>> out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto m = std::make_shared<gp::RobustnessModel>(gp::loadModel(f.string()));
    const auto& def = predicates::defaultRegistry().at(m->predicate);
    if (m->featureSchema != predicates::featureSchema(def)) {
      throw InputError("model '" + f.string() + "' has a feature schema that does not match " + def.name);
    }
    out[m->predicate] = std::move(m);
  }
  return out;
}

/// Leaf scorer for the planner: GP models, or exact MPR with the models'
/// normalization constants when planner.exact_leaves is set.
std::unique_ptr<planner::LeafScorer> makeScorer(const config::RunConfig& cfg, const std::string& modelsDir) {
  const auto models = loadModels(modelsDir);
  if (cfg.planner().exactLeaves) {
    std::map<std::string, robustness::NormalizationConstants> norms;
    for (const auto& [name, m] : models) norms[name] = m->norm;
    return std::make_unique<planner::ExactLeafScorer>(cfg.planner().exactSampler, norms);
  }
  auto scorer = std::make_unique<planner::GpLeafScorer>();
  for (const auto& [name, m] : models) scorer->add(m);
  return scorer;
}

void writeOrPrint(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    scenario::writeTextFile(path, text);
  }
}

int cmdMonitor(const Globals& g, const std::string& scenarioPath, const std::string& rulesPath, long from, long to,
               const std::string& out) {
  const auto cfg = loadConfig(g);
  const auto sc = scenario::loadScenario(scenarioPath);
  const auto& reg = predicates::defaultRegistry();
  const auto rules = rulesPath.empty() ? predicates::ruleFormulas()
                                       : stl::parseRules(scenario::readTextFile(rulesPath), reg.lookup());
  const predicates::World world{&sc.road, predicates::resolveParams(cfg.rules(), sc.vMax)};
  const auto& states = sc.signal.states();
  const predicates::StateTrace trace(reg, world, states);
  const long last = static_cast<long>(sc.signal.size()) - 1;
  if (to < 0 || to > last) to = last;
  if (from < 0 || from > to) throw InputError("step range is empty");
  std::ostringstream csv;
  csv.precision(17);
  csv << "step,formula,characteristic,rho\n";
  for (long k = from; k <= to; ++k) {
    for (const auto& r : rules) {
      const auto c = stl::evalCharacteristic(r.formula, trace, static_cast<std::size_t>(k));
      const auto rho = stl::evalModelFreeRobustness(r.formula, trace, static_cast<std::size_t>(k), world.params.rhoMax);
      csv << k << ',' << r.name << ',' << c.value << ',' << rho.value << '\n';
    }
  }
  writeOrPrint(out, csv.str());
  return 0;
}

int cmdMpr(const Globals& g, const std::string& scenarioPath, const std::string& predicate, std::size_t k,
           const std::string& argsText, const std::string& normPath) {
  const auto cfg = loadConfig(g);
  const auto sc = scenario::loadScenario(scenarioPath);
  const auto& def = predicates::defaultRegistry().at(predicate);
  const auto args = defaultArgs(def, sc, argsText);
  robustness::NormalizationConstants norm = cfg.norm();
  if (!normPath.empty()) {
    const json j = scenario::readJsonFile(normPath);
    norm = robustness::NormalizationConstants::fromJson(j.contains("norm") ? j.at("norm") : j);
  }
  const predicates::World world{&sc.road, predicates::resolveParams(cfg.rules(), sc.vMax)};
  const auto r = robustness::computeMPR(def, world, sc.signal, k, args, cfg.sampler(), norm);
  const json out{{"predicate", predicate}, {"args", args},        {"k", k},
                 {"c", r.c},               {"p_bar", r.pBar},     {"rho", r.rho},
                 {"clipped", r.clipped},   {"sample_count", r.samples}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmdGenDataset(const Globals& g, const std::string& predicate, const std::string& scenarioDir, std::size_t n,
                  const std::string& out) {
  auto cfg = loadConfig(g);
  const auto& def = predicates::defaultRegistry().at(predicate);
  const auto samplerCfg = cfg.sampler();
  auto opt = cfg.dataset(def);
  if (n > 0) opt.size = n;
  std::mt19937_64 rng(g.seed);
  gp::InstanceSource source;
  if (scenarioDir.empty()) {
    synthetic::Options so;
    so.steps = std::max<std::size_t>(cfg.count("dataset.synthetic_steps"), samplerCfg.horizon + 1);
    source = gp::syntheticSource(def, so, samplerCfg.horizon);
  } else {
    std::vector<std::shared_ptr<const scenario::Scenario>> pool;
    std::vector<std::string> names;
    for (const auto& f : scenarioFiles(scenarioDir)) {
      pool.push_back(std::make_shared<const scenario::Scenario>(scenario::loadScenario(f.string())));
      names.push_back(f.filename().string());
    }
    source = gp::poolSource(def, std::move(pool), std::move(names), samplerCfg.horizon);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto gen = gp::generateDataset(def, cfg.rules(), samplerCfg, source, rng, opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  scenario::writeTextFile(out, gp::datasetToJson(gen.data).dump() + "\n");
  std::size_t plus = 0;
  for (const auto& r : gen.data.rows) plus += r.c == 1;
  std::cerr << "gen-dataset: " << gen.data.rows.size() << " rows (" << plus << " with c = +1) in " << secs << " s\n";
  return 0;
}

int cmdTrainGp(const Globals& g, const std::string& datasetPath, const std::string& out) {
  const auto cfg = loadConfig(g);
  const gp::Dataset data = gp::datasetFromJson(scenario::readJsonFile(datasetPath));
  std::vector<std::size_t> idx(data.rows.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(g.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto nHold = static_cast<std::size_t>(std::floor(cfg.holdout() * static_cast<double>(idx.size())));
  gp::Dataset train = data, hold = data;
  train.rows.clear();
  hold.rows.clear();
  for (std::size_t i = 0; i < idx.size(); ++i) (i < nHold ? hold : train).rows.push_back(data.rows[idx[i]]);
  const auto t0 = std::chrono::steady_clock::now();
  gp::RobustnessModel model = gp::trainRobustnessModel(train, cfg.train(g.seed));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double se = 0.0, seRaw = 0.0;
  std::size_t inside = 0;
  for (const auto& r : hold.rows) {
    const Eigen::Map<const gp::VectorXd> z(r.z.data(), static_cast<Eigen::Index>(r.z.size()));
    const gp::Prediction p = model.gp.predict(z);
    const double rho = gp::rectifyPrediction(p.mean, r.c);
    se += (rho - r.y) * (rho - r.y);
    seRaw += (p.mean - r.y) * (p.mean - r.y);
    inside += std::abs(p.mean - r.y) <= 2.0 * std::sqrt(p.variance);
  }
  const double nh = static_cast<double>(hold.rows.size());
  model.metadata = {{"n_train", train.rows.size()},
                    {"n_holdout", hold.rows.size()},
                    {"seed", g.seed},
                    {"train_seconds", secs}};
  if (!hold.rows.empty()) {
    model.metadata["holdout_rmse"] = std::sqrt(se / nh);
    model.metadata["holdout_rmse_unrectified"] = std::sqrt(seRaw / nh);
    model.metadata["holdout_within_2sigma"] = static_cast<double>(inside) / nh;
  }
  gp::saveModel(model, out);
  std::cout << model.metadata.dump(2) << '\n';
  return 0;
}

int cmdPredict(const Globals& g, const std::string& modelPath, const std::string& scenarioPath, std::size_t k,
               const std::string& other) {
  const auto cfg = loadConfig(g);
  const auto model = gp::loadModel(modelPath);
  const auto& def = predicates::defaultRegistry().at(model.predicate);
  const auto sc = scenario::loadScenario(scenarioPath);
  std::string b = other;
  if (def.arity == 2 && b.empty()) b = defaultArgs(def, sc, "")[1];
  const predicates::World world{&sc.road, predicates::resolveParams(cfg.rules(), sc.vMax)};
  const auto p = gp::predictRobustness(model, def, world, sc.signal.at(k), b);
  json args{std::string(scenario::kEgoId)};
  if (def.arity == 2) args.push_back(b);
  std::cout << json{{"predicate", model.predicate}, {"args", args}, {"k", k},        {"c", p.c},
                    {"rho", p.rho},                 {"mean", p.mean}, {"sigma", p.sigma}}
                   .dump(2)
            << '\n';
  return 0;
}

int cmdPlan(const Globals& g, const std::string& scenarioPath, const std::string& modelsDir, long step,
            const std::string& outDir) {
  const auto cfg = loadConfig(g);
  const auto sc = scenario::loadScenario(scenarioPath);
  const auto scorer = makeScorer(cfg, modelsDir);
  planner::Planner p(cfg.planner(), *scorer);
  p.setRuleParams(cfg.rules());
  const std::size_t k = step >= 0 ? static_cast<std::size_t>(step) : cfg.count("planner.step");
  const auto result = p.plan(sc, k);
  json costs = planner::costBreakdown(result);
  const auto recorded = p.scoreRecorded(sc, k);
  costs["recorded_J_r"] = recorded.first;
  for (const auto& r : recorded.second) costs["recorded_rules"][r.rule] = r.rho;
  if (!outDir.empty()) {
    fs::create_directories(outDir);
    scenario::writeTextFile((fs::path(outDir) / "trajectory.csv").string(),
                            planner::trajectoryToCsv(result.trajectory, p.config().dt));
    scenario::writeTextFile((fs::path(outDir) / "profile.csv").string(), planner::profileToCsv(result.profile));
    scenario::writeTextFile((fs::path(outDir) / "costs.json").string(), costs.dump(2) + "\n");
  }
  std::cout << costs.dump(2) << '\n';
  return 0;
}

int cmdEval(const Globals& g, const std::string& scenarioDir, const std::string& modelsDir, const std::string& out) {
  const auto cfg = loadConfig(g);
  const auto files = scenarioFiles(scenarioDir);
  const auto scorer = makeScorer(cfg, modelsDir);
  planner::Planner p(cfg.planner(), *scorer);
  p.setRuleParams(cfg.rules());
  const std::size_t k = cfg.count("planner.step");
  std::ostringstream csv;
  csv.precision(17);
  csv << "scenario,status,planned_rg1,recorded_rg1,planned_jr,recorded_jr,planned_better\n";
  std::size_t better = 0, done = 0;
  for (const auto& f : files) {
    const auto sc = scenario::loadScenario(f.string());
    const auto recorded = p.scoreRecorded(sc, k);
    try {
      const auto r = p.plan(sc, k);
      const auto& c = r.costs[r.index];
      const bool b = c.rules.at(0).rho > recorded.second.at(0).rho;
      better += b;
      ++done;
      csv << f.filename().string() << ",ok," << c.rules.at(0).rho << ',' << recorded.second.at(0).rho << ',' << c.jr
          << ',' << recorded.first << ',' << (b ? 1 : 0) << '\n';
    } catch (const InputError& e) {
      std::cerr << "eval: " << f.filename().string() << ": " << e.what() << '\n';
      csv << f.filename().string() << ",no_plan,," << recorded.second.at(0).rho << ",," << recorded.first << ",0\n";
    }
  }
  writeOrPrint(out, csv.str());
  std::cerr << "eval: planned R_G1 robustness above recorded in " << better << " of " << files.size()
            << " scenarios (" << done << " planned)\n";
  return 0;
}

int cmdRelevance(const Globals& g, const std::string& modelPath, const std::string& out) {
  loadConfig(g);
  const auto model = gp::loadModel(modelPath);
  const auto r = gp::featureRelevance(model.gp);
  std::vector<std::size_t> order(static_cast<std::size_t>(r.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return r[static_cast<Eigen::Index>(a)] > r[static_cast<Eigen::Index>(b)];
  });
  std::ostringstream csv;
  csv << "feature,relevance\n";
  for (std::size_t i : order) csv << model.featureSchema[i] << ',' << r[static_cast<Eigen::Index>(i)] << '\n';
  writeOrPrint(out, csv.str());
  return 0;
}

int cmdSynth(const Globals& g, const std::string& kind, std::size_t count, const std::string& outDir) {
  loadConfig(g);
  if (kind != "random" && kind != "following") throw InputError("--kind must be 'random' or 'following'");
  fs::create_directories(outDir);
  std::mt19937_64 rng(g.seed);
  for (std::size_t i = 0; i < count; ++i) {
    const auto sc = kind == "random" ? synthetic::randomScenario(rng) : synthetic::followingScenario(rng);
    char name[32];
    std::snprintf(name, sizeof name, "%s_%04zu.json", kind.c_str(), i);
    scenario::saveScenario(sc, (fs::path(outDir) / name).string());
  }
  std::cerr << "synth: wrote " << count << " scenarios to " << outDir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model predictive robustness of traffic rules: monitoring, estimation, surrogate models and planning"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.configPath, "JSON config file (default: $MPR_CONFIG)");
  app.add_option("--set", g.sets, "Override a config key, e.g. --set sampler.horizon=20");
  app.add_option("--seed", g.seed, "Seed for every random choice");
  app.add_option("--jobs", g.jobs, "Worker thread hint")->check(CLI::PositiveNumber);

  std::function<int()> run;

  std::string scenarioPath, rulesPath, out, predicate, argsText, normPath, dir, modelPath, modelsDir, other, kind;
  long from = 0, to = -1, step = -1;
  std::size_t k = 0, n = 0;

  auto* monitor = app.add_subcommand("monitor", "Characteristic and model-free robustness of rules per step");
  monitor->add_option("--scenario", scenarioPath)->required();
  monitor->add_option("--rules", rulesPath, "Rules file with 'name := formula' lines (default: built-in rules)");
  monitor->add_option("--from", from);
  monitor->add_option("--to", to);
  monitor->add_option("--out", out, "Output CSV (default: stdout)");
  monitor->callback([&] { run = [&] { return cmdMonitor(g, scenarioPath, rulesPath, from, to, out); }; });

  auto* mprCmd = app.add_subcommand("mpr", "Model predictive robustness of a predicate at one step");
  mprCmd->add_option("--scenario", scenarioPath)->required();
  mprCmd->add_option("--predicate", predicate)->required();
  mprCmd->add_option("--k", k)->required();
  mprCmd->add_option("--args", argsText, "Comma-separated vehicle ids (default: ego[,first other])");
  mprCmd->add_option("--norm", normPath, "Normalization constants (JSON, or a model file)");
  mprCmd->callback([&] { run = [&] { return cmdMpr(g, scenarioPath, predicate, k, argsText, normPath); }; });

  auto* gen = app.add_subcommand("gen-dataset", "Label instances with exact model predictive robustness");
  gen->add_option("--predicate", predicate)->required();
  gen->add_option("--scenarios", dir, "Directory of scenario files (default: synthetic scenarios)");
  gen->add_option("--n", n, "Number of rows (default: dataset.size)");
  gen->add_option("--out", out)->required();
  gen->callback([&] { run = [&] { return cmdGenDataset(g, predicate, dir, n, out); }; });

  auto* train = app.add_subcommand("train-gp", "Train a GP surrogate; a share of the rows is held out");
  train->add_option("--dataset", dir)->required();
  train->add_option("--out", out)->required();
  train->callback([&] { run = [&] { return cmdTrainGp(g, dir, out); }; });

  auto* predict = app.add_subcommand("predict", "Surrogate robustness at one step");
  predict->add_option("--model", modelPath)->required();
  predict->add_option("--scenario", scenarioPath)->required();
  predict->add_option("--k", k)->required();
  predict->add_option("--other", other, "Id of the other vehicle for two-vehicle predicates");
  predict->callback([&] { run = [&] { return cmdPredict(g, modelPath, scenarioPath, k, other); }; });

  auto* plan = app.add_subcommand("plan", "Robustness-aware trajectory planning");
  plan->add_option("--scenario", scenarioPath)->required();
  plan->add_option("--models", modelsDir, "Directory with one model file per predicate")->required();
  plan->add_option("--k", step, "Planning step (default: planner.step)");
  plan->add_option("--out-dir", dir, "Writes trajectory.csv, profile.csv and costs.json");
  plan->callback([&] { run = [&] { return cmdPlan(g, scenarioPath, modelsDir, step, dir); }; });

  auto* eval = app.add_subcommand("eval", "Planned vs recorded rule robustness over a scenario directory");
  eval->add_option("--scenarios", dir)->required();
  eval->add_option("--models", modelsDir)->required();
  eval->add_option("--out", out, "Summary CSV (default: stdout)");
  eval->callback([&] { run = [&] { return cmdEval(g, dir, modelsDir, out); }; });

  auto* rel = app.add_subcommand("relevance", "Max-normalized feature relevance of a model");
  rel->add_option("--model", modelPath)->required();
  rel->add_option("--out", out, "Output CSV (default: stdout)");
  rel->callback([&] { run = [&] { return cmdRelevance(g, modelPath, out); }; });

  auto* synth = app.add_subcommand("synth", "Write synthetic scenarios");
  synth->add_option("--kind", kind, "random or following")->required();
  synth->add_option("--count", n)->required();
  synth->add_option("--out-dir", dir)->required();
  synth->callback([&] { run = [&] { return cmdSynth(g, kind, n, dir); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    return run();
  } catch (const mpr::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const mpr::InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
