#pragma once

// Cart-pole with fidelity knobs: integrator, force magnitude, position sensor
// noise, sensor precision and episode length. Dynamics follow the classic
// Barto/Sutton/Anderson equations with a frictionless track.

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>

#include "mffals/error.hpp"
#include "mffals/rng.hpp"
#include "mffals/space.hpp"
#include "mffals/spec_logic.hpp"

namespace mffals {

/// Deterministic observation -> discrete action policy.
struct Controller {
  std::string name;
  std::function<int(std::span<const double>)> policy;

  int act(std::span<const double> obs) const { return policy(obs); }
};

enum class Integrator { euler, semi_implicit_euler };

inline std::string to_string(Integrator i) { return i == Integrator::euler ? "euler" : "semi_implicit_euler"; }

inline Integrator integrator_from_string(const std::string& s) {
  if (s == "euler") return Integrator::euler;
  if (s == "semi_implicit_euler") return Integrator::semi_implicit_euler;
  throw InvalidInput("unknown integrator '" + s + "'");
}

struct PositionNoise {
  double mean = 0.0;
  double variance = 0.25;
};

struct CartPoleFidelityConfig {
  Integrator integrator = Integrator::semi_implicit_euler;
  double force_magnitude = 20.0;
  std::optional<PositionNoise> position_noise;
  int sensor_digits = 8;
  int episode_length = 450;

  void validate() const {
    if (!(force_magnitude > 0)) throw InvalidInput("force magnitude must be positive");
    if (sensor_digits < 1) throw InvalidInput("sensor digits must be >= 1");
    if (episode_length < 1) throw InvalidInput("episode length must be >= 1");
    if (position_noise && position_noise->variance < 0) throw InvalidInput("noise variance must be >= 0");
  }

  static CartPoleFidelityConfig low() { return {Integrator::euler, 10.0, PositionNoise{0.0, 0.25}, 2, 150}; }
  static CartPoleFidelityConfig middle() { return {Integrator::euler, 15.0, std::nullopt, 6, 300}; }
  static CartPoleFidelityConfig high() { return {Integrator::semi_implicit_euler, 20.0, std::nullopt, 8, 450}; }
};

struct CartPolePhysics {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double dt = 0.02;
  double x_threshold = 2.4;
  double theta_threshold_rad = 12.0 * 2.0 * std::numbers::pi / 360.0;
};

/// (x, v, θ, θ̇)
using CartPoleState = std::array<double, 4>;

/// x0, v0, θ0, θ̇0 perturbations, pole mass, pole (half-)length.
inline UncertaintySpace cartpole_space() {
  return {{-2.0, -0.05, -0.2, -0.05, 0.05, 0.4}, {2.0, 0.05, 0.2, 0.05, 0.15, 0.6}};
}

inline CartPoleState cartpole_step(const CartPoleState& s, double force, double pole_mass, double pole_length,
                                   const CartPolePhysics& phys, Integrator integrator) {
  const auto [x, v, th, om] = s;
  const double total_mass = phys.cart_mass + pole_mass;
  const double pml = pole_mass * pole_length;
  const double c = std::cos(th), sn = std::sin(th);
  const double temp = (force + pml * om * om * sn) / total_mass;
  const double th_acc = (phys.gravity * sn - c * temp) / (pole_length * (4.0 / 3.0 - pole_mass * c * c / total_mass));
  const double x_acc = temp - pml * th_acc * c / total_mass;
  const double dt = phys.dt;
  if (integrator == Integrator::euler) return {x + dt * v, v + dt * x_acc, th + dt * om, om + dt * th_acc};
  const double v1 = v + dt * x_acc;
  const double om1 = om + dt * th_acc;
  return {x + dt * v1, v1, th + dt * om1, om1};
}

/// Rounds to `digits` decimal places.
inline double quantize_reading(double x, int digits) {
  const double scale = std::pow(10.0, digits);
  return std::round(x * scale) / scale;
}

/// Pushes right when gains·obs > 0, left otherwise.
inline Controller pd_balance_controller(std::array<double, 4> gains, std::string name = "pd_balance") {
  return {std::move(name), [gains](std::span<const double> obs) {
            double s = 0.0;
            for (std::size_t j = 0; j < 4; ++j) s += gains[j] * obs[j];
            return s > 0.0 ? 1 : 0;
          }};
}

/// Tuned on the high-fidelity configuration: balances nominal starts for the
/// full 450 steps, but large position/angle perturbations still break it.
inline constexpr std::array<double, 4> kDefaultBalanceGains{1.0, 0.6, 12.0, 3.0};

inline Trajectory cartpole_simulate(const CartPoleFidelityConfig& cfg, const EnvParams& e, const Controller& ctl,
                                    std::uint64_t seed, const CartPolePhysics& phys = {}) {
  cfg.validate();
  cartpole_space().require_contains(e.values);
  const double pole_mass = e.values[4];
  const double pole_length = e.values[5];

  Rng rng(seed);
  std::normal_distribution<double> noise(cfg.position_noise ? cfg.position_noise->mean : 0.0,
                                         cfg.position_noise ? std::sqrt(cfg.position_noise->variance) : 1.0);

  CartPoleState s{e.values[0], e.values[1], e.values[2], e.values[3]};
  Trajectory traj;
  traj.env_params = e;
  traj.seed = seed;
  traj.push(0.0, State(s.begin(), s.end()));

  std::array<double, 4> obs{};
  for (int k = 0; k < cfg.episode_length; ++k) {
    obs = s;
    if (cfg.position_noise) obs[0] += noise(rng);
    for (double& o : obs) o = quantize_reading(o, cfg.sensor_digits);
    const double force = ctl.act(obs) == 1 ? cfg.force_magnitude : -cfg.force_magnitude;
    s = cartpole_step(s, force, pole_mass, pole_length, phys, cfg.integrator);
    traj.push((k + 1) * phys.dt, State(s.begin(), s.end()));
    if (std::abs(s[0]) > phys.x_threshold || std::abs(s[2]) > phys.theta_threshold_rad) break;
  }
  return traj;
}

}  // namespace mffals
