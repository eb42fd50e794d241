#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace mffals;

namespace {

const EnvParams kNominal{{0.0, 0.0, 0.0, 0.0, 0.1, 0.5}};

}  // namespace

TEST(CartPole, EulerStepFromRest) {
  const auto s = cartpole_step({0.0, 0.0, 0.0, 0.0}, 10.0, 0.1, 0.5, {}, Integrator::euler);
  EXPECT_DOUBLE_EQ(s[0], 0.0);
  EXPECT_DOUBLE_EQ(s[1], 0.1951219512195122);
  EXPECT_DOUBLE_EQ(s[2], 0.0);
  EXPECT_DOUBLE_EQ(s[3], -0.2926829268292683);
}

TEST(CartPole, SemiImplicitStep) {
  const auto s = cartpole_step({0.01, 0.02, 0.03, 0.04}, -15.0, 0.12, 0.45, {}, Integrator::semi_implicit_euler);
  EXPECT_NEAR(s[0], 0.004564947459594682, 1e-15);
  EXPECT_NEAR(s[1], -0.27175262702026587, 1e-15);
  EXPECT_NEAR(s[2], 0.040716682207471724, 1e-15);
  EXPECT_NEAR(s[3], 0.5358341103735862, 1e-14);
}

TEST(CartPole, FidelityTable) {
  const auto lo = CartPoleFidelityConfig::low(), mid = CartPoleFidelityConfig::middle(), hi = CartPoleFidelityConfig::high();
  EXPECT_EQ(lo.episode_length, 150);
  EXPECT_EQ(mid.episode_length, 300);
  EXPECT_EQ(hi.episode_length, 450);
  EXPECT_EQ(lo.force_magnitude, 10.0);
  EXPECT_EQ(mid.force_magnitude, 15.0);
  EXPECT_EQ(hi.force_magnitude, 20.0);
  EXPECT_EQ(lo.sensor_digits, 2);
  EXPECT_EQ(mid.sensor_digits, 6);
  EXPECT_EQ(hi.sensor_digits, 8);
  EXPECT_TRUE(lo.position_noise.has_value());
  EXPECT_FALSE(hi.position_noise.has_value());
  EXPECT_EQ(hi.integrator, Integrator::semi_implicit_euler);
}

TEST(CartPole, NominalStartIsSafe) {
  const auto env = make_cartpole_environment();
  for (int f = 1; f <= 3; ++f) EXPECT_GT(env.robustness(f, kNominal, 0), 0.0) << "fidelity " << f;
}

TEST(CartPole, EpisodeLengths) {
  const auto env = make_cartpole_environment();
  EXPECT_EQ(env.simulate(1, kNominal, 0).size(), 151u);
  EXPECT_EQ(env.simulate(3, kNominal, 0).size(), 451u);
}

TEST(CartPole, ZeroGainsFalsify) {
  const auto env = make_cartpole_environment({CartPoleFidelityConfig::high()}, pd_balance_controller({0, 0, 0, 0}));
  EXPECT_LT(env.robustness(1, kNominal, 0), 0.0);
}

TEST(CartPole, FlippedGainsFalsify) {
  auto g = kDefaultBalanceGains;
  for (double& v : g) v = -v;
  const auto env = make_cartpole_environment({CartPoleFidelityConfig::high()}, pd_balance_controller(g));
  EXPECT_LT(env.robustness(1, EnvParams{{0.0, 0.0, 0.05, 0.0, 0.1, 0.5}}, 0), 0.0);
}

TEST(CartPole, SameSeedSameTrajectory) {
  const auto env = make_cartpole_environment();
  const EnvParams e{{0.3, 0.01, -0.1, 0.02, 0.12, 0.45}};
  EXPECT_EQ(env.simulate(1, e, 42).states, env.simulate(1, e, 42).states);
}

TEST(CartPole, RejectsOutOfSpace) {
  const auto env = make_cartpole_environment();
  EXPECT_THROW(env.simulate(3, EnvParams{{3.0, 0, 0, 0, 0.1, 0.5}}, 0), InvalidInput);
  EXPECT_THROW(env.simulate(3, EnvParams{{0.0, 0, 0}}, 0), InvalidInput);
  EXPECT_THROW(env.simulate(4, kNominal, 0), InvalidInput);
}

TEST(Idm, AccelerationFixture) {
  const IdmParams p{3.0, 5.0, 1.5, 2.0, 30.0};
  EXPECT_DOUBLE_EQ(idm_accel(p, 20.0, 30.0, 5.0), -4.3156029721178655);
}

TEST(Idm, FreeFlowEquilibrium) {
  const IdmParams p;
  EXPECT_NEAR(idm_accel(p, p.v0, 1e12, 0.0), 0.0, 1e-12);
}

TEST(Idm, NeverAcceleratesIntoMinimumGap) {
  const IdmParams p;
  EXPECT_LE(idm_accel(p, 0.0, p.s0, 0.0), 1e-12);
  EXPECT_THROW(idm_accel(p, 5.0, 0.0, 0.0), InvalidInput);
}

TEST(Idm, FidelityTable) {
  EXPECT_EQ(IdmParams::low().a, 3.0);
  EXPECT_EQ(IdmParams::middle().b, 5.25);
  EXPECT_EQ(IdmParams::high().T, 1.0);
}

TEST(Idm, GapPredicateExamples) {
  auto constant_gap = [](std::vector<double> gaps) {
    Trajectory t;
    for (std::size_t k = 0; k < gaps.size(); ++k) t.push(0.1 * static_cast<double>(k), {0.0, 10.0, gaps[k] + 5.0, 10.0});
    return t;
  };
  EXPECT_DOUBLE_EQ(eval_robustness_value(idm_chain_spec(), constant_gap({12.0, 12.0, 12.0})), 7.0);
  EXPECT_NEAR(eval_robustness_value(idm_chain_spec(), constant_gap({9.0, 4.2, 6.0})), -0.8, 1e-12);
  EXPECT_EQ(eval_robustness_value(idm_chain_spec(), constant_gap({5.0, 8.0})), 0.0);
}

TEST(Idm, IdleEgoStaysWithinInitialMargin) {
  const auto env = make_idm_environment({IdmParams::low(), IdmParams::middle(), IdmParams::high()}, idle_controller());
  const EnvParams e{{10.0, 10.0, 12.0}};
  for (int f = 1; f <= 3; ++f) {
    const double rho = env.robustness(f, e, 0);
    EXPECT_GT(rho, 0.0) << "fidelity " << f;
    EXPECT_LE(rho, 7.0) << "fidelity " << f;  // t = 0 is part of the min
  }
}

TEST(Idm, AggressiveEgoCollides) {
  const auto env = make_idm_environment({IdmParams::high()}, aggressive_controller());
  EXPECT_LT(env.robustness(1, EnvParams{{10.0, 10.0, 12.0}}, 0), 0.0);
}

TEST(Idm, HeadwayControllerSafeAtSlowCorner) {
  const auto env = make_idm_environment();
  EXPECT_GT(env.robustness(3, EnvParams{{8.0, 12.0, 12.0}}, 0), 0.0);
}

TEST(Synthetic, ForresterValues) {
  EXPECT_DOUBLE_EQ(forrester_hf(0.0), 3.027209981231713);
  EXPECT_DOUBLE_EQ(forrester_lf(0.5), -4.5453512865871595);
  EXPECT_NEAR(forrester_hf(0.7572487585232999), -6.0207400557670825, 1e-12);
}

TEST(Synthetic, EnvironmentShiftsRobustness) {
  const auto env = make_synthetic_environment();
  EXPECT_EQ(env.q(), 2);
  EXPECT_DOUBLE_EQ(env.robustness(2, EnvParams{{0.0}}, 0), 3.027209981231713 + kSyntheticShift);
  EXPECT_LT(env.robustness(2, EnvParams{{0.7572487585232999}}, 0), 0.0);
}

TEST(Environment, RestrictRenumbers) {
  const auto env = make_cartpole_environment();
  const auto sub = env.restrict({1, 3});
  EXPECT_EQ(sub.q(), 2);
  EXPECT_EQ(sub.source_fidelity(2), 3);
  EXPECT_EQ(sub.fidelity_name(2), "cartpole_f3");
  EXPECT_EQ(sub.robustness(2, kNominal, 5), env.robustness(3, kNominal, 5));
  EXPECT_THROW(env.restrict({2, 1}), InvalidInput);
  EXPECT_THROW(env.restrict({}), InvalidInput);
}

TEST(Environment, SimulatorErrorsBecomeFailures) {
  const Environment env("boom", UncertaintySpace::unit(1), synthetic_spec(0.0), {"f1"},
                        {[](const EnvParams&, std::uint64_t) -> Trajectory { throw std::runtime_error("nan state"); }});
  EXPECT_THROW(env.simulate(1, EnvParams{{0.5}}, 0), SimulatorFailure);
}
