#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "mpr/sampler/quintic.hpp"
#include "mpr/sampler/sampler.hpp"

namespace mpr::sampler {
namespace {

using scenario::Agent;
using scenario::Lane;
using scenario::LaneNetwork;

// Dense Gaussian elimination with partial pivoting.
std::vector<double> solve(std::vector<std::vector<double>> A, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    }
    std::swap(A[c], A[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = A[r][c] / A[c][c];
      for (std::size_t k = c; k < n; ++k) A[r][k] -= f * A[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= A[i][k] * x[k];
    x[i] = s / A[i][i];
  }
  return x;
}

// Hermite system rows: p, p', p'' at t for coefficients c0..c5.
std::vector<double> quinticBySolve(BoundaryState a, BoundaryState b, double T) {
  auto row = [](double t, int deriv) {
    std::vector<double> r(6, 0.0);
    for (int i = deriv; i < 6; ++i) {
      double f = 1.0;
      for (int j = 0; j < deriv; ++j) f *= (i - j);
      r[i] = f * std::pow(t, i - deriv);
    }
    return r;
  };
  return solve({row(0, 0), row(0, 1), row(0, 2), row(T, 0), row(T, 1), row(T, 2)}, {a.p, a.v, a.a, b.p, b.v, b.a});
}

TEST(Quintic, Stationary) {
  const Quintic q = quinticConnect({1, 0, 0}, {1, 0, 0}, 2.7);
  for (double t : {0.0, 0.3, 1.1, 2.7}) {
    EXPECT_DOUBLE_EQ(q.position(t), 1.0);
    EXPECT_DOUBLE_EQ(q.velocity(t), 0.0);
  }
  EXPECT_THROW(quinticConnect({0, 0, 0}, {1, 0, 0}, 0.0), InputError);
}

TEST(Quintic, SymmetricMidpoint) {
  const Quintic q = quinticConnect({0, 0, 0}, {1, 0, 0}, 1.0);
  EXPECT_NEAR(q.position(0.5), 0.5, 1e-12);
  const auto c = quinticBySolve({0, 0, 0}, {1, 0, 0}, 1.0);
  double p = 0.0;
  for (int i = 5; i >= 0; --i) p = p * 0.5 + c[i];
  EXPECT_NEAR(p, 0.5, 1e-12);
}

TEST(Quintic, MatchesLinearSolveAndBoundaries) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-20, 20), ut(0.2, 5.0);
  for (int i = 0; i < 500; ++i) {
    const BoundaryState a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)};
    const double T = ut(rng);
    const Quintic q = quinticConnect(a, b, T);
    const auto c = quinticBySolve(a, b, T);
    for (int j = 0; j < 6; ++j) EXPECT_NEAR(q.c[j], c[j], 1e-8 * (1 + std::abs(c[j])));
    EXPECT_NEAR(q.position(0), a.p, 1e-9);
    EXPECT_NEAR(q.velocity(0), a.v, 1e-9);
    EXPECT_NEAR(q.acceleration(0), a.a, 1e-9);
    EXPECT_NEAR(q.position(T), b.p, 1e-9);
    EXPECT_NEAR(q.velocity(T), b.v, 1e-9);
    EXPECT_NEAR(q.acceleration(T), b.a, 1e-9);
  }
}

TEST(Quintic, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3, 3), ut(0, 2);
  for (int i = 0; i < 500; ++i) {
    Quintic q;
    for (double& c : q.c) c = u(rng);
    const double t = ut(rng), h = 1e-5;
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
    EXPECT_LT(rel((q.position(t + h) - q.position(t - h)) / (2 * h), q.velocity(t)), 1e-5);
    EXPECT_LT(rel((q.velocity(t + h) - q.velocity(t - h)) / (2 * h), q.acceleration(t)), 1e-5);
    EXPECT_LT(rel((q.acceleration(t + h) - q.acceleration(t - h)) / (2 * h), q.jerk(t)), 1e-5);
  }
}

Road straightRoad(int lanes, double width = 3.75) {
  LaneNetwork net;
  for (int k = 1; k <= lanes; ++k) {
    Lane lane;
    lane.id = k;
    lane.width = width;
    lane.centerline = {{0.0, (k - 1) * width}, {2000.0, (k - 1) * width}};
    if (k > 1) lane.right = k - 1;
    if (k < lanes) lane.left = k + 1;
    net.lanes.push_back(lane);
  }
  return Road(net, 1);
}

VehicleState egoAt(double s, double d, double v, double a = 0.0) {
  VehicleState x;
  x.s = s;
  x.d = d;
  x.v = v;
  x.a = a;
  return x;
}

TEST(Sampler, SingleContinuationSample) {
  const Road road = straightRoad(3);
  SamplerConfig cfg;
  cfg.nV = cfg.nD = cfg.nS = 1;
  cfg.dv = {0, 0};
  cfg.ds = {0, 0};
  const JointState js{egoAt(100, 3.75, 20), {}};
  const auto samples = sampleEgoTrajectories(js, road, cfg);
  ASSERT_EQ(samples.size(), 1u);
  ASSERT_EQ(samples[0].states.size(), cfg.horizon + 1);
  for (std::size_t i = 0; i <= cfg.horizon; ++i) {
    EXPECT_NEAR(samples[0].states[i].v, 20.0, 1e-9);
    EXPECT_NEAR(samples[0].states[i].s, 100 + 20 * cfg.dt * i, 1e-9);
    EXPECT_NEAR(samples[0].states[i].d, 3.75, 1e-9);
  }
}

TEST(Sampler, DefaultGridPermissive) {
  const Road road = straightRoad(3);
  SamplerConfig cfg;
  cfg.limits = {1e6, -1e6, 1e6, 1e6};
  const JointState js{egoAt(100, 3.75, 25), {}};
  const auto samples = sampleEgoTrajectories(js, road, cfg);
  EXPECT_EQ(samples.size(), 729u);
  EXPECT_DOUBLE_EQ(cfg.duration(), 37 * 0.04);
  for (const auto& s : samples) EXPECT_EQ(s.states.front(), js.ego);
  // Determinism.
  const auto again = sampleEgoTrajectories(js, road, cfg);
  ASSERT_EQ(again.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(samples[i].grid, again[i].grid);
    EXPECT_EQ(samples[i].states, again[i].states);
  }
}

TEST(Sampler, NegativeSpeedRejected) {
  const Road road = straightRoad(3);
  SamplerConfig cfg;
  cfg.nD = cfg.nS = 1;
  cfg.nV = 3;
  cfg.dv = {-10, 0};
  cfg.ds = {0, 0};
  cfg.limits.aMax = 100;
  const JointState js{egoAt(100, 3.75, 5), {}};
  const auto samples = sampleEgoTrajectories(js, road, cfg);
  // Terminal speeds -5, 0, 5: only the negative one is rejected.
  ASSERT_EQ(samples.size(), 2u);
  EXPECT_EQ(samples[0].grid[0], 1u);
  EXPECT_EQ(samples[1].grid[0], 2u);
}

TEST(Sampler, Feasibility) {
  const Road road = straightRoad(3);
  KinematicLimits lim;
  TrajectorySample s;
  for (int i = 0; i < 10; ++i) s.states.push_back(egoAt(100 + 2.0 * i, 0.0, 20.0));
  EXPECT_TRUE(checkFeasibility(s, lim, road));
  s.states[4].a = lim.aMax + 1e-9;
  EXPECT_FALSE(checkFeasibility(s, lim, road));
  s.states[4].a = -lim.aMax;
  EXPECT_TRUE(checkFeasibility(s, lim, road));
  // Right boundary at d = -1.875; the footprint edge is at d - w/2.
  s.states[6].d = -1.875 + 0.9 - 1e-6;
  EXPECT_FALSE(checkFeasibility(s, lim, road));
  s.states[6].d = -1.875 + 0.9 + 1e-6;
  EXPECT_TRUE(checkFeasibility(s, lim, road));
  s.states[2].d_rate = lim.dRateMax + 0.1;
  EXPECT_FALSE(checkFeasibility(s, lim, road));
}

TEST(Sampler, LooseningLimitsKeepsSamples) {
  const Road road = straightRoad(3);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uv(5, 35), ua(-3, 3), ud(0.5, 7), ul(0.5, 1.5);
  for (int trial = 0; trial < 10; ++trial) {
    SamplerConfig cfg;
    cfg.nV = cfg.nD = cfg.nS = 5;
    cfg.limits = {6.0 * ul(rng), 5.0 * ul(rng), 30.0 * ul(rng), 3.0 * ul(rng)};
    const JointState js{egoAt(100, ud(rng), uv(rng), ua(rng)), {}};
    const auto tight = sampleEgoTrajectories(js, road, cfg);
    SamplerConfig loose = cfg;
    loose.limits.aMax *= ul(rng) + 1.0;
    loose.limits.vMin -= 1.0;
    loose.limits.vMax += 5.0;
    loose.limits.dRateMax *= 1.5;
    const auto wide = sampleEgoTrajectories(js, road, loose);
    std::size_t j = 0;
    for (const auto& t : tight) {
      while (j < wide.size() && wide[j].grid != t.grid) ++j;
      EXPECT_LT(j, wide.size()) << "sample lost after loosening";
    }
  }
}

TEST(Sampler, MostLikelyTrajectories) {
  std::vector<JointState> states;
  for (int k = 0; k < 100; ++k) {
    states.push_back({egoAt(k, 0, 10), {Agent{"7", egoAt(50.0 + k, 0, 10)}, Agent{"9", egoAt(80.0 + k, 3, 10)}}});
  }
  const Signal sig(states, 0.04);
  const auto ml = mostLikelyTrajectories(sig, 10, 37);
  ASSERT_EQ(ml.size(), 2u);
  ASSERT_EQ(ml.at("7").size(), 38u);
  EXPECT_EQ(ml.at("7").front().s, 60.0);
  EXPECT_EQ(ml.at("7").back().s, 97.0);
  EXPECT_NO_THROW(mostLikelyTrajectories(sig, 62, 37));
  try {
    mostLikelyTrajectories(sig, 63, 37);
    ADD_FAILURE();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("7, 9"), std::string::npos) << e.what();
  }
  const Signal alone(std::vector<JointState>(5, JointState{egoAt(0, 0, 1), {}}), 0.1);
  EXPECT_TRUE(mostLikelyTrajectories(alone, 0, 37).empty());
}

}  // namespace
}  // namespace mpr::sampler
