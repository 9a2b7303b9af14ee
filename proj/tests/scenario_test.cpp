#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "json.hpp"
#include "mpr/scenario/curvilinear_frame.hpp"
#include "mpr/scenario/io.hpp"
#include "mpr/scenario/road.hpp"

namespace mpr::scenario {
namespace {

using nlohmann::json;

// Straight road along the x-axis; lane k (1-based) has its centerline at
// y = (k - 1) * width, lane 1 is the rightmost.
Road straightRoad(int lanes, double width = 3.75, double length = 200.0) {
  LaneNetwork net;
  for (int k = 1; k <= lanes; ++k) {
    Lane lane;
    lane.id = k;
    lane.width = width;
    const double y = (k - 1) * width;
    lane.centerline = {{0.0, y}, {length / 2, y}, {length, y}};
    if (k > 1) lane.right = k - 1;
    if (k < lanes) lane.left = k + 1;
    net.lanes.push_back(lane);
  }
  return Road(net, 1);
}

// Counter-clockwise arc of radius r from angle 0 to `sweep`, with n segments.
std::vector<Vec2> arc(double r, double sweep, int n) {
  std::vector<Vec2> pts;
  for (int i = 0; i <= n; ++i) {
    const double t = sweep * i / n;
    pts.push_back({r * std::cos(t), r * std::sin(t)});
  }
  return pts;
}

TEST(CurvilinearFrame, StraightProjection) {
  CurvilinearFrame f({{0, 0}, {10, 0}});
  auto p = f.project({3, 1});
  EXPECT_DOUBLE_EQ(p.s, 3.0);
  EXPECT_DOUBLE_EQ(p.d, 1.0);
  auto on = f.project({7.5, 0});
  EXPECT_DOUBLE_EQ(on.s, 7.5);
  EXPECT_DOUBLE_EQ(on.d, 0.0);
  Vec2 c = f.toCartesian(3, 0);
  EXPECT_DOUBLE_EQ(c.x, 3.0);
  EXPECT_DOUBLE_EQ(c.y, 0.0);
}

TEST(CurvilinearFrame, QuarterCircleProjection) {
  const int n = 1000;
  const double r = 5.0;
  CurvilinearFrame f(arc(r, std::numbers::pi / 2, n));
  const double phi = std::numbers::pi / 4;
  const Vec2 p{6 * std::cos(phi), 6 * std::sin(phi)};
  auto c = f.project(p);
  // Vertex n/2 sits at 45 deg; its normal is radial, so the foot is that vertex.
  const double chord = 2 * r * std::sin(std::numbers::pi / 4 / n);
  EXPECT_NEAR(c.s, (n / 2) * chord, 1e-9);
  EXPECT_NEAR(c.s, r * phi, 1e-5);
  // Counter-clockwise traversal: the outside of the circle is to the right.
  EXPECT_NEAR(c.d, -1.0, 1e-9);
  Vec2 back = f.toCartesian(c.s, c.d);
  EXPECT_NEAR(back.x, p.x, 1e-9);
  EXPECT_NEAR(back.y, p.y, 1e-9);
}

TEST(CurvilinearFrame, Errors) {
  EXPECT_THROW(CurvilinearFrame({{0, 0}}), InputError);
  EXPECT_THROW(CurvilinearFrame({{0, 0}, {0, 0}}), InputError);
  CurvilinearFrame f({{0, 0}, {10, 0}});
  EXPECT_THROW(f.project({-1, 0.5}), InputError);
  EXPECT_THROW(f.project({11, 0.5}), InputError);
  EXPECT_THROW(f.toCartesian(10.5, 0), InputError);
  EXPECT_THROW(f.toCartesian(-0.5, 0), InputError);
  // Concave corner: the point on the bisector is equidistant from both legs.
  CurvilinearFrame corner({{0, 0}, {10, 0}, {10, 10}});
  EXPECT_NO_THROW(corner.project({9, 1}));
  CurvilinearFrame ushape({{0, 0}, {10, 0}, {10, 4}, {0, 4}});
  EXPECT_THROW(ushape.project({5, 2}), InputError);
}

TEST(CurvilinearFrame, RoundTripProperty) {
  std::mt19937_64 rng(7);
  // Wavy path with curvature radius well above the sampled band.
  std::vector<Vec2> pts;
  for (int i = 0; i <= 400; ++i) {
    const double x = 0.5 * i;
    pts.push_back({x, 8.0 * std::sin(x / 25.0)});
  }
  CurvilinearFrame wavy(pts);
  CurvilinearFrame circle(arc(40.0, 1.5 * std::numbers::pi, 300));
  for (const CurvilinearFrame* f : {&wavy, &circle}) {
    std::uniform_real_distribution<double> us(0.0, f->length());
    std::uniform_real_distribution<double> ud(-6.0, 6.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double s = us(rng), d = ud(rng);
      const Vec2 p = f->toCartesian(s, d);
      const auto c = f->project(p);
      const Vec2 q = f->toCartesian(c.s, c.d);
      worst = std::max({worst, norm(p - q), std::abs(c.s - s), std::abs(c.d - d)});
    }
    EXPECT_LT(worst, 1e-6);
  }
}

// Area of the intersection of two convex CCW polygons by Sutherland-Hodgman clipping.
double intersectionArea(std::vector<Vec2> subject, const std::vector<Vec2>& clip) {
  for (std::size_t i = 0; i < clip.size() && !subject.empty(); ++i) {
    const Vec2 a = clip[i], b = clip[(i + 1) % clip.size()];
    auto inside = [&](Vec2 p) { return cross(b - a, p - a) >= 0.0; };
    std::vector<Vec2> out;
    for (std::size_t j = 0; j < subject.size(); ++j) {
      const Vec2 p = subject[j], q = subject[(j + 1) % subject.size()];
      const double cp = cross(b - a, p - a), cq = cross(b - a, q - a);
      if (inside(p)) out.push_back(p);
      if ((cp >= 0.0) != (cq >= 0.0)) out.push_back(p + (q - p) * (cp / (cp - cq)));
    }
    subject = out;
  }
  double area = 0.0;
  for (std::size_t i = 0; i < subject.size(); ++i) area += cross(subject[i], subject[(i + 1) % subject.size()]);
  return 0.5 * std::abs(area);
}

std::vector<Vec2> rect(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }

TEST(OccupiedLanes, Examples) {
  Road road = straightRoad(2);
  VehicleState v;
  v.s = 50;
  v.d = 0.0;
  auto occ = road.occupiedLanes(v);
  EXPECT_EQ(occ.lanes, std::vector<int>{1});
  EXPECT_EQ(occ.centerLanes, std::vector<int>{1});

  v.d = 1.875;  // shared bound of lanes 1 and 2
  occ = road.occupiedLanes(v);
  EXPECT_EQ(occ.lanes, (std::vector<int>{1, 2}));

  v.d = 1.875 + 0.1;
  occ = road.occupiedLanes(v);
  EXPECT_EQ(occ.lanes, (std::vector<int>{1, 2}));
  EXPECT_EQ(occ.centerLanes, std::vector<int>{2});
  // Oracle: positive clipped area against each lane rectangle.
  const Quad fp = road.footprint(v);
  const std::vector<Vec2> fpv(fp.begin(), fp.end());
  EXPECT_GT(intersectionArea(fpv, rect(0, -1.875, 200, 1.875)), 0.0);
  EXPECT_GT(intersectionArea(fpv, rect(0, 1.875, 200, 5.625)), 0.0);

  v.d = 20.0;
  EXPECT_THROW(road.occupiedLanes(v), InputError);
}

TEST(OccupiedLanes, MatchesClippingOracle) {
  Road road = straightRoad(3);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ud(-3.0, 10.5), us(10.0, 190.0), ul(2.0, 6.0), uw(0.5, 2.5);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    VehicleState v;
    v.s = us(rng);
    v.d = ud(rng);
    v.length = ul(rng);
    v.width = uw(rng);
    const Quad fp = road.footprint(v);
    const std::vector<Vec2> fpv(fp.begin(), fp.end());
    std::vector<int> expected;
    for (int k = 1; k <= 3; ++k) {
      const double y = (k - 1) * 3.75;
      if (intersectionArea(fpv, rect(0, y - 1.875, 200, y + 1.875)) > 1e-12) expected.push_back(k);
    }
    if (expected.empty()) {
      EXPECT_THROW(road.occupiedLanes(v), InputError);
      continue;
    }
    EXPECT_EQ(road.occupiedLanes(v).lanes, expected) << "d=" << v.d << " w=" << v.width;
    ++checked;
  }
  EXPECT_GT(checked, 800);
}

TEST(OccupiedLanes, MonotoneInFootprintAndCenterSubset) {
  LaneNetwork net;
  for (int k = 1; k <= 3; ++k) {
    Lane lane;
    lane.id = k;
    lane.width = 3.5;
    lane.centerline = arc(200.0 + 3.5 * (k - 1), 1.0, 120);
    // Inner radii are on the left for a counter-clockwise arc.
    if (k > 1) lane.left = k - 1;
    if (k < 3) lane.right = k + 1;
    net.lanes.push_back(lane);
  }
  Road road(net, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> us(10.0, 180.0), ud(-6.0, 6.0), ul(2.0, 6.0), uw(0.5, 2.5), ug(0.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    VehicleState v;
    v.s = us(rng);
    v.d = ud(rng);
    v.length = ul(rng);
    v.width = uw(rng);
    OccupiedLanes base;
    try {
      base = road.occupiedLanes(v);
    } catch (const InputError&) {
      continue;
    }
    for (int c : base.centerLanes) {
      EXPECT_TRUE(std::count(base.lanes.begin(), base.lanes.end(), c));
    }
    VehicleState bigger = v;
    bigger.length += ug(rng);
    bigger.width += ug(rng);
    const auto grown = road.occupiedLanes(bigger);
    for (int l : base.lanes) {
      EXPECT_TRUE(std::count(grown.lanes.begin(), grown.lanes.end(), l)) << "lane " << l << " lost";
    }
  }
}

TEST(Road, DistancesOnStraightRoad) {
  Road road = straightRoad(3);
  VehicleState v;
  v.s = 40;
  v.d = 4.0;
  const auto lane = road.centerLaneDistances(v);
  EXPECT_NEAR(lane.left, 1.875 - 0.25, 1e-12);
  EXPECT_NEAR(lane.right, 1.875 + 0.25, 1e-12);
  const auto bounds = road.boundaryDistances(v);
  EXPECT_NEAR(bounds.left, 7.5 + 1.875 - 4.0, 1e-12);
  EXPECT_NEAR(bounds.right, 4.0 + 1.875, 1e-12);
  EXPECT_NEAR(road.centerLaneOffset(v), 3.75, 1e-12);
  EXPECT_NEAR(road.roadClearance(road.footprint(v)), 9.375 - (4.0 + 0.9), 1e-12);
  // Lane separation is negative exactly when the footprint overlaps the lane.
  const Quad fp = road.footprint(v);
  EXPECT_LT(road.laneSeparation(fp, road.laneIndex(2)), 0.0);
  EXPECT_GT(road.laneSeparation(fp, road.laneIndex(1)), 0.0);
  EXPECT_NEAR(road.laneSeparation(fp, road.laneIndex(1)), (4.0 - 0.9) - 1.875, 1e-12);
}

TEST(Road, NetworkErrors) {
  LaneNetwork net;
  net.lanes.push_back({1, {{0, 0}, {10, 0}}, 3.5, std::nullopt, 7});
  EXPECT_THROW(Road{net}, InputError);
  net.lanes[0].right.reset();
  net.lanes[0].width = 0.0;
  EXPECT_THROW(Road{net}, InputError);
  net.lanes[0].width = 3.5;
  net.lanes.push_back(net.lanes[0]);
  EXPECT_THROW(Road{net}, InputError);
}

json minimalScenario() {
  return json::parse(R"({
    "lanes": [{"id": 1, "centerline": [[0, 0], [100, 0]], "width": 3.75}],
    "vehicles": [{"id": "ego", "l": 4.5, "w": 1.8, "trace": [[0.0, 10, 0, 20, 0], [0.1, 12, 0.1, 20, 0.5]]}],
    "dt": 0.1
  })");
}

TEST(ScenarioIo, Minimal) {
  Scenario sc = parseScenario(minimalScenario());
  ASSERT_EQ(sc.signal.size(), 2u);
  EXPECT_DOUBLE_EQ(sc.signal[1].ego.s, 12.0);
  EXPECT_DOUBLE_EQ(sc.signal[1].ego.a, 0.5);
  EXPECT_NEAR(sc.signal[0].ego.d_rate, 1.0, 1e-12);
  EXPECT_FALSE(sc.vMax.has_value());
  EXPECT_EQ(sc.road.laneCount(), 1u);
}

TEST(ScenarioIo, SchemaErrors) {
  auto expectError = [](const json& doc, const std::string& fragment) {
    try {
      parseScenario(doc);
      ADD_FAILURE() << "no error for " << fragment;
    } catch (const InputError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  json dup = minimalScenario();
  dup["vehicles"].push_back(dup["vehicles"][0]);
  expectError(dup, "duplicate vehicle id");

  json unknown = minimalScenario();
  unknown["vehicles"][0]["colour"] = "red";
  expectError(unknown, "$.vehicles[0].colour");

  json nonMonotone = minimalScenario();
  nonMonotone["vehicles"][0]["trace"][1][0] = 0.0;
  expectError(nonMonotone, "non-monotone timestamp");

  json noEgo = minimalScenario();
  noEgo["vehicles"][0]["id"] = 3;
  expectError(noEgo, "no vehicle with id 'ego'");

  json badWidth = minimalScenario();
  badWidth["lanes"][0]["width"] = "wide";
  expectError(badWidth, "$.lanes[0].width");

  json missingDt = minimalScenario();
  missingDt.erase("dt");
  expectError(missingDt, "$.dt");
}

Scenario richScenario() {
  json doc = minimalScenario();
  doc["lanes"].push_back({{"id", 2}, {"centerline", {{0, 3.75}, {100, 3.75}}}, {"width", 3.75}, {"right", 1}});
  doc["lanes"][0]["left"] = 2;
  doc["v_max"] = 33.3333333333333;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  json trace = json::array();
  json other = json::array();
  for (int k = 0; k < 6; ++k) {
    trace.push_back({0.1 * k, 10 + 2.0 * k + u(rng), 0.1 * u(rng), 20 + u(rng), u(rng)});
    other.push_back({0.1 * k, 30 + 2.0 * k + u(rng), 3.75 + 0.1 * u(rng), 18 + u(rng), u(rng)});
  }
  doc["vehicles"] = json::array({{{"id", "ego"}, {"l", 4.5}, {"w", 1.8}, {"trace", trace}},
                                 {{"id", 17}, {"l", 4.1}, {"w", 1.7}, {"trace", other}}});
  return parseScenario(doc);
}

TEST(ScenarioIo, JsonRoundTrip) {
  const Scenario a = richScenario();
  const auto path = std::filesystem::temp_directory_path() / "mpr_scenario_roundtrip.json";
  saveScenario(a, path.string());
  const Scenario b = loadScenario(path.string());
  std::filesystem::remove(path);
  ASSERT_EQ(a.signal.size(), b.signal.size());
  ASSERT_EQ(b.signal.otherIds(), std::vector<std::string>{"17"});
  EXPECT_NEAR(*a.vMax, *b.vMax, 1e-9);
  for (std::size_t k = 0; k < a.signal.size(); ++k) {
    for (const std::string id : {"ego", "17"}) {
      const VehicleState& x = a.signal[k].at(id);
      const VehicleState& y = b.signal[k].at(id);
      EXPECT_NEAR(x.s, y.s, 1e-9);
      EXPECT_NEAR(x.d, y.d, 1e-9);
      EXPECT_NEAR(x.v, y.v, 1e-9);
      EXPECT_NEAR(x.a, y.a, 1e-9);
      EXPECT_NEAR(x.length, y.length, 1e-9);
      EXPECT_NEAR(x.d_rate, y.d_rate, 1e-9);
    }
  }
}

TEST(ScenarioIo, CsvRoundTrip) {
  const Scenario a = richScenario();
  const Signal b = parseSignalCsv(signalToCsv(a.signal), a.signal.dt());
  ASSERT_EQ(a.signal.size(), b.size());
  for (std::size_t k = 0; k < b.size(); ++k) {
    for (const std::string id : {"ego", "17"}) {
      const VehicleState& x = a.signal[k].at(id);
      const VehicleState& y = b[k].at(id);
      EXPECT_NEAR(x.s, y.s, 1e-9);
      EXPECT_NEAR(x.d, y.d, 1e-9);
      EXPECT_NEAR(x.v, y.v, 1e-9);
      EXPECT_NEAR(x.a, y.a, 1e-9);
      EXPECT_NEAR(x.width, y.width, 1e-9);
    }
  }
  EXPECT_THROW(parseSignalCsv("frame,id,s\n", 0.1), InputError);
  EXPECT_THROW(parseSignalCsv("frame,id,s,d,v,a,l,w\n0,ego,1,0,1,0,4,2\n0,ego,1,0,1,0,4,2\n", 0.1), InputError);
}

}  // namespace
}  // namespace mpr::scenario
