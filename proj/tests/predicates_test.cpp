#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "mpr/predicates/features.hpp"
#include "mpr/predicates/predicates.hpp"
#include "mpr/predicates/rules.hpp"
#include "mpr/stl/semantics.hpp"

namespace mpr::predicates {
namespace {

using scenario::Agent;
using scenario::Lane;
using scenario::LaneNetwork;

Road straightRoad(int lanes, double width = 3.75) {
  LaneNetwork net;
  for (int k = 1; k <= lanes; ++k) {
    Lane lane;
    lane.id = k;
    lane.width = width;
    lane.centerline = {{-50.0, (k - 1) * width}, {1000.0, (k - 1) * width}};
    if (k > 1) lane.right = k - 1;
    if (k < lanes) lane.left = k + 1;
    net.lanes.push_back(lane);
  }
  return Road(net, 1);
}

VehicleState at(double s, double d, double v = 20.0, double a = 0.0) {
  VehicleState x;
  x.s = s;
  x.d = d;
  x.v = v;
  x.a = a;
  return x;
}

JointState pair(VehicleState ego, VehicleState b) { return {ego, {Agent{"b", b}}}; }

class PredicateTest : public ::testing::Test {
 protected:
  PredicateTest() : road(straightRoad(3)) {
    world.road = &road;
    world.params.vMax = 33.33;
  }

  bool holds(const std::string& name, const JointState& js) const {
    const auto& def = defaultRegistry().at(name);
    std::vector<std::string> args{"ego"};
    if (def.arity == 2) args.push_back("b");
    return def.holds(world, js, args);
  }
  double alpha(const std::string& name, const JointState& js) const {
    const auto& def = defaultRegistry().at(name);
    std::vector<std::string> args{"ego"};
    if (def.arity == 2) args.push_back("b");
    return def.alpha(world, js, args);
  }

  Road road;
  World world;
};

TEST_F(PredicateTest, InSameLane) {
  // L_ego = {1, 2}, L_b = {2}
  EXPECT_TRUE(holds("in_same_lane", pair(at(10, 1.875), at(30, 3.75))));
  EXPECT_GT(alpha("in_same_lane", pair(at(10, 1.875), at(30, 3.75))), 0.0);
  // L_ego = {1}, L_b = {2}
  EXPECT_FALSE(holds("in_same_lane", pair(at(10, 0.0), at(30, 3.75))));
  EXPECT_LT(alpha("in_same_lane", pair(at(10, 0.0), at(30, 3.75))), 0.0);
  // Both straddle the shared bound.
  const auto js = pair(at(10, 1.8), at(30, 2.0));
  EXPECT_EQ(road.occupiedLanes(js.ego).lanes, (std::vector<int>{1, 2}));
  EXPECT_EQ(road.occupiedLanes(js.at("b")).lanes, (std::vector<int>{1, 2}));
  EXPECT_TRUE(holds("in_same_lane", js));
  // Depth oracle: ego 0.9 m into lane 1 is limited by its own overlap.
  EXPECT_NEAR(alpha("in_same_lane", pair(at(10, 0.0), at(30, 0.0))), 1.875 + 0.9, 1e-12);
  EXPECT_THROW(holds("in_same_lane", JointState{at(0, 0), {}}), InputError);
}

TEST_F(PredicateTest, SafeDistance) {
  EXPECT_DOUBLE_EQ(safeDistance(world.params, 20, 20), 8.0);
  // Gap 10 m at equal speeds.
  auto js = pair(at(0, 0), at(4.5 + 10.0, 0));
  EXPECT_TRUE(holds("safe_distance", js));
  EXPECT_NEAR(alpha("safe_distance", js), 2.0, 1e-12);
  js = pair(at(0, 0), at(4.5 + 8.0, 0));
  EXPECT_TRUE(holds("safe_distance", js));
  EXPECT_NEAR(alpha("safe_distance", js), 0.0, 1e-12);
  js = pair(at(0, 0), at(4.5 + 5.0, 0));
  EXPECT_FALSE(holds("safe_distance", js));
  EXPECT_NEAR(alpha("safe_distance", js), -3.0, 1e-12);
  // Behind or in another lane: vacuous.
  js = pair(at(20, 0), at(5, 0));
  EXPECT_TRUE(holds("safe_distance", js));
  EXPECT_EQ(alpha("safe_distance", js), world.params.rhoMax);
  js = pair(at(0, 0), at(6, 7.5));
  EXPECT_TRUE(holds("safe_distance", js));
  // Faster leader reduces d_safe, clamped at 0.
  EXPECT_DOUBLE_EQ(safeDistance(world.params, 10, 30), 0.0);
  EXPECT_NEAR(safeDistance(world.params, 30, 20), 12.0 + (900.0 - 400.0) / 20.0, 1e-12);
}

TEST_F(PredicateTest, SafeDistanceMonotoneInGap) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> uv(0, 40), ug(-4.0, 60), ustep(0, 20);
  for (int i = 0; i < 1000; ++i) {
    const double g = ug(rng);
    auto js = pair(at(100, 0, uv(rng)), at(104.5 + g, 0.2, uv(rng)));
    const bool before = holds("safe_distance", js);
    js.others[0].state.s += ustep(rng);
    if (before) {
      EXPECT_TRUE(holds("safe_distance", js));
    }
  }
}

TEST_F(PredicateTest, NoUnnecessaryBraking) {
  JointState alone{at(0, 0, 20, -3.0), {}};
  EXPECT_FALSE(holds("no_unnecessary_braking", alone));
  EXPECT_NEAR(alpha("no_unnecessary_braking", alone), -1.0, 1e-12);
  JointState cruising{at(0, 0, 20, 0.0), {}};
  EXPECT_TRUE(holds("no_unnecessary_braking", cruising));
  EXPECT_NEAR(alpha("no_unnecessary_braking", cruising), 2.0, 1e-12);
  // Leader 5 m ahead at equal speed: 5 < 1.2 * 8, so braking is justified.
  auto justified = pair(at(0, 0, 20, -3.0), at(4.5 + 5.0, 0, 20));
  EXPECT_TRUE(holds("no_unnecessary_braking", justified));
  EXPECT_NEAR(alpha("no_unnecessary_braking", justified), 9.6 - 5.0, 1e-12);
  // Leader far ahead or in another lane does not justify braking.
  EXPECT_FALSE(holds("no_unnecessary_braking", pair(at(0, 0, 20, -3.0), at(40, 0, 20))));
  EXPECT_FALSE(holds("no_unnecessary_braking", pair(at(0, 0, 20, -3.0), at(8, 7.5, 20))));
}

TEST_F(PredicateTest, SpeedLimit) {
  JointState js{at(0, 0, 30), {}};
  EXPECT_TRUE(holds("speed_limit", js));
  EXPECT_NEAR(alpha("speed_limit", js), 3.33, 1e-12);
  js.ego.v = 33.33;
  EXPECT_TRUE(holds("speed_limit", js));
  EXPECT_EQ(alpha("speed_limit", js), 0.0);
  js.ego.v = 40;
  EXPECT_FALSE(holds("speed_limit", js));
  EXPECT_NEAR(alpha("speed_limit", js), -6.67, 1e-12);
  world.params.vMax.reset();
  EXPECT_THROW(holds("speed_limit", js), InputError);
  EXPECT_EQ(resolveParams(world.params, 25.0).vMax, 25.0);
}

JointState randomState(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> us(0, 150), ud(-3, 10.5), uv(0, 45), ua(-8, 4), ul(3, 6), uw(1.5, 2.5);
  std::uniform_int_distribution<int> un(1, 4);
  auto vehicle = [&] {
    VehicleState x = at(us(rng), ud(rng), uv(rng), ua(rng));
    x.length = ul(rng);
    x.width = uw(rng);
    return x;
  };
  JointState js{vehicle(), {}};
  const int n = un(rng);
  for (int i = 0; i < n; ++i) js.others.push_back({i == 0 ? "b" : "o" + std::to_string(i), vehicle()});
  return js;
}

TEST_F(PredicateTest, SignConsistency) {
  std::mt19937_64 rng(99);
  for (const std::string& name : defaultRegistry().names()) {
    int positive = 0, negative = 0;
    for (int i = 0; i < 1000; ++i) {
      const JointState js = randomState(rng);
      const bool h = holds(name, js);
      const double a = alpha(name, js);
      if (a > 0) {
        EXPECT_TRUE(h) << name;
        ++positive;
      }
      if (a < 0) {
        EXPECT_FALSE(h) << name;
        ++negative;
      }
    }
    EXPECT_GT(positive, 0) << name;
    EXPECT_GT(negative, 0) << name;
  }
}

TEST_F(PredicateTest, InSameLaneSymmetric) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) {
    const JointState js = randomState(rng);
    const JointState swapped{js.at("b"), {Agent{"b", js.ego}}};
    EXPECT_EQ(holds("in_same_lane", js), holds("in_same_lane", swapped));
    EXPECT_EQ(alpha("in_same_lane", js), alpha("in_same_lane", swapped));
  }
}

std::vector<JointState> follow(double gap0, double closing, int steps, double vEgo = 20.0) {
  std::vector<JointState> out;
  for (int k = 0; k < steps; ++k) {
    const double t = 0.1 * k;
    out.push_back(pair(at(vEgo * t, 0, vEgo), at(4.5 + gap0 + (vEgo - closing) * t, 0, vEgo - closing)));
  }
  return out;
}

TEST_F(PredicateTest, RuleFormulas) {
  const auto rules = ruleFormulas();
  ASSERT_EQ(rules.size(), 3u);
  EXPECT_EQ(rules[0].name, "R_G1");

  const auto compliant = follow(30.0, 0.0, 20);
  StateTrace ok(defaultRegistry(), world, compliant);
  for (const auto& r : rules) EXPECT_EQ(stl::evalCharacteristic(r.formula, ok, 0).value, 1) << r.name;

  // The leader is 5 m/s slower; the gap shrinks from 12 m below d_safe.
  const auto closing = follow(12.0, 5.0, 30);
  StateTrace tr(defaultRegistry(), world, closing);
  const auto stepwise = ruleFormulas(0)[0].formula;
  bool sawViolation = false;
  for (std::size_t k = 0; k < closing.size(); ++k) {
    const auto& js = closing[k];
    const bool unsafe = bumperGap(js.ego, js.at("b")) < safeDistance(world.params, js.ego.v, js.at("b").v);
    EXPECT_EQ(stl::evalCharacteristic(stepwise, tr, k).value, unsafe ? -1 : 1) << "k=" << k;
    sawViolation = sawViolation || unsafe;
  }
  EXPECT_TRUE(sawViolation);
  EXPECT_EQ(stl::evalCharacteristic(rules[0].formula, tr, 0).value, -1);

  auto fast = follow(30.0, 0.0, 10, 40.0);
  StateTrace over(defaultRegistry(), world, fast);
  EXPECT_EQ(stl::evalCharacteristic(rules[2].formula, over, 0).value, -1);
  EXPECT_NEAR(stl::evalModelFreeRobustness(rules[2].formula, over, 0).value, 33.33 - 40.0, 1e-12);
}

TEST_F(PredicateTest, Features) {
  Road wide = straightRoad(1, 4.0);
  World w{&wide, world.params};
  VehicleState ego = at(10, 0);
  ego.width = 2.0;
  const auto& speed = defaultRegistry().at("speed_limit");
  const auto z = extractFeatures(speed, w, JointState{ego, {}});
  const auto names = featureSchema(speed);
  ASSERT_EQ(z.size(), names.size());
  auto value = [&](const std::vector<double>& v, const std::vector<std::string>& n, const std::string& key) {
    for (std::size_t i = 0; i < n.size(); ++i) {
      if (n[i] == key) return v[i];
    }
    ADD_FAILURE() << key;
    return 0.0;
  };
  EXPECT_DOUBLE_EQ(value(z, names, "ego_lane_left"), 2.0);
  EXPECT_DOUBLE_EQ(value(z, names, "ego_lane_right"), 2.0);
  EXPECT_DOUBLE_EQ(value(z, names, "ego_road_left"), 2.0);

  const auto& same = defaultRegistry().at("in_same_lane");
  const auto js = pair(at(10, 0.5, 22), at(10, 0.5, 22));
  const auto zz = extractFeatures(same, world, js, "b");
  const auto nn = featureSchema(same);
  ASSERT_EQ(zz.size(), nn.size());
  EXPECT_EQ(nn.size(), 25u);
  EXPECT_EQ(value(zz, nn, "rel_ds"), 0.0);
  EXPECT_EQ(value(zz, nn, "rel_dd"), 0.0);
  EXPECT_EQ(value(zz, nn, "rel_dv"), 0.0);
  EXPECT_THROW(extractFeatures(same, world, js), InputError);
  EXPECT_EQ(featureSchema(defaultRegistry().at("no_unnecessary_braking")).size(), 14u);

  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    const JointState r = randomState(rng);
    for (const std::string& name : defaultRegistry().names()) {
      const auto& def = defaultRegistry().at(name);
      const std::string other = def.arity == 2 ? "b" : "";
      const auto a = extractFeatures(def, world, r, other);
      const auto b = extractFeatures(def, world, r, other);
      EXPECT_EQ(a, b);
      EXPECT_EQ(a.size(), featureSchema(def).size());
      std::vector<JointState> one{r};
      StateTrace tr(defaultRegistry(), world, one);
      std::vector<std::string> args{"ego"};
      if (!other.empty()) args.push_back(other);
      const auto c = stl::evalCharacteristic(stl::predicate(name, args), tr, 0).value;
      EXPECT_EQ(a[0], static_cast<double>(c));
    }
  }
}

}  // namespace
}  // namespace mpr::predicates
