#pragma once

#include <array>

#include "mpr/error.hpp"

namespace mpr::sampler {

/// Position, velocity and acceleration of a one-dimensional motion.
struct BoundaryState {
  double p = 0.0;
  double v = 0.0;
  double a = 0.0;
};

/// p(t) = c0 + c1 t + ... + c5 t^5.
struct Quintic {
  std::array<double, 6> c{};

  double position(double t) const { return ((((c[5] * t + c[4]) * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0]; }
  double velocity(double t) const {
    return (((5 * c[5] * t + 4 * c[4]) * t + 3 * c[3]) * t + 2 * c[2]) * t + c[1];
  }
  double acceleration(double t) const { return ((20 * c[5] * t + 12 * c[4]) * t + 6 * c[3]) * t + 2 * c[2]; }
  double jerk(double t) const { return (60 * c[5] * t + 24 * c[4]) * t + 6 * c[3]; }
};

/// Quintic matching position, velocity and acceleration at t = 0 and t = T.
inline Quintic quinticConnect(const BoundaryState& start, const BoundaryState& end, double T) {
  if (!(T > 0.0)) throw InputError("quintic duration must be positive");
  Quintic q;
  q.c[0] = start.p;
  q.c[1] = start.v;
  q.c[2] = 0.5 * start.a;
  const double T2 = T * T, T3 = T2 * T;
  // Residual of the end conditions after the known low-order terms.
  const double h0 = end.p - (start.p + start.v * T + 0.5 * start.a * T2);
  const double h1 = end.v - (start.v + start.a * T);
  const double h2 = end.a - start.a;
  q.c[3] = (10 * h0 - 4 * h1 * T + 0.5 * h2 * T2) / T3;
  q.c[4] = (-15 * h0 + 7 * h1 * T - h2 * T2) / (T3 * T);
  q.c[5] = (6 * h0 - 3 * h1 * T + 0.5 * h2 * T2) / (T3 * T2);
  return q;
}

}  // namespace mpr::sampler
