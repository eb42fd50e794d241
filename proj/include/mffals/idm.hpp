#pragma once

// One-lane car following: a scripted vehicle that brakes briefly, an IDM leader behind it and
// the controlled ego vehicle behind the leader.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>

#include "mffals/cartpole.hpp"
#include "mffals/error.hpp"
#include "mffals/space.hpp"
#include "mffals/spec_logic.hpp"

namespace mffals {

struct IdmParams {
  double a = 3.0;    // max comfortable acceleration
  double b = 5.0;    // comfortable deceleration
  double T = 1.5;    // time gap
  double s0 = 2.0;   // standstill gap
  double v0 = 15.0;  // desired speed
  double delta = 4.0;

  void validate() const {
    if (!(a > 0 && b > 0 && T > 0 && s0 > 0 && v0 > 0)) throw InvalidInput("IDM parameters must be positive");
  }

  static IdmParams low() { return {3.0, 5.0, 1.5}; }
  static IdmParams middle() { return {3.5, 5.25, 1.25}; }
  static IdmParams high() { return {4.0, 5.5, 1.0}; }
};

/// Desired gap s*, floored at s0.
inline double idm_desired_gap(const IdmParams& p, double v, double dv) {
  return std::max(p.s0, p.s0 + v * p.T + v * dv / (2.0 * std::sqrt(p.a * p.b)));
}

/// dv = v - v_front (positive when closing in).
inline double idm_accel(const IdmParams& p, double v, double gap, double dv) {
  if (!(gap > 0.0)) throw InvalidInput("idm_accel: gap must be positive");
  const double s = idm_desired_gap(p, v, dv) / gap;
  return p.a * (1.0 - std::pow(v / p.v0, p.delta) - s * s);
}

struct IdmScenario {
  double dt = 0.1;
  int steps = 300;
  double ego_step = 2.0;            // |accel| for accelerate/decelerate actions
  double lead_offset = 30.0;        // slow vehicle bumper gap ahead of the leader at t = 0
  double pulse_start = 4.0;
  double pulse_end = 6.0;
  double pulse_decel = 2.0;
  double recover_accel = 1.0;       // slow vehicle returns to its initial speed afterwards
  double max_brake = 9.0;           // physical limit on the leader's IDM output
};

/// (ego speed, leader speed, initial bumper gap).
inline UncertaintySpace idm_space() { return {{8.0, 8.0, 10.0}, {12.0, 12.0, 12.0}}; }

/// Observation for IDM controllers: (gap, v_ego, v_ego - v_leader). Actions: 0 brake, 1 idle, 2 accelerate.
/// Defaults are safe for most of the space; the fastest-closing corners still break it.
inline Controller headway_controller(double headway = 0.7, double margin = 3.0, std::string name = "headway") {
  return {std::move(name), [headway, margin](std::span<const double> obs) {
            const double gap = obs[0], v = obs[1], dv = obs[2];
            const double want = headway * v + 1.0 * std::max(dv, 0.0);
            if (gap < want) return 0;
            if (gap > want + margin && dv < 0.5) return 2;
            return 1;
          }};
}

/// Keeps accelerating until the gap is nearly gone.
inline Controller aggressive_controller(double trigger_gap = 3.0) {
  return {"aggressive", [trigger_gap](std::span<const double> obs) { return obs[0] < trigger_gap ? 0 : 2; }};
}

inline Controller idle_controller() {
  return {"idle", [](std::span<const double>) { return 1; }};
}

inline Trajectory idm_chain_simulate(const IdmParams& leader, const EnvParams& e, const Controller& ctl,
                                     std::uint64_t seed, const IdmScenario& sc = {}) {
  leader.validate();
  idm_space().require_contains(e.values);
  const double L = predicates::kVehicleLength;
  double xe = 0.0, ve = e.values[0];
  double xl = e.values[2] + L, vl = e.values[1];
  double xs = xl + sc.lead_offset + L, vs = vl;
  const double vs_init = vs;

  Trajectory traj;
  traj.env_params = e;
  traj.seed = seed;
  traj.push(0.0, {xe, ve, xl, vl});

  for (int k = 0; k < sc.steps; ++k) {
    const double t = k * sc.dt;
    double as = 0.0;
    if (t >= sc.pulse_start && t < sc.pulse_end) as = -sc.pulse_decel;
    else if (t >= sc.pulse_end && vs < vs_init) as = std::min(sc.recover_accel, (vs_init - vs) / sc.dt);
    const double al = std::clamp(idm_accel(leader, vl, xs - xl - L, vl - vs), -sc.max_brake, leader.a);
    const std::array<double, 3> obs{xl - xe - L, ve, ve - vl};
    const int act = ctl.act(obs);
    const double ae = act == 2 ? sc.ego_step : act == 0 ? -sc.ego_step : 0.0;

    auto advance = [&](double& x, double& v, double acc) {
      const double v1 = std::max(0.0, v + acc * sc.dt);
      x += 0.5 * (v + v1) * sc.dt;
      v = v1;
    };
    advance(xs, vs, as);
    advance(xl, vl, al);
    advance(xe, ve, ae);
    traj.push((k + 1) * sc.dt, {xe, ve, xl, vl});
    if (xl - xe - L <= 0.0 || xs - xl - L <= 0.0) break;
  }
  return traj;
}

}  // namespace mffals
