#include <gtest/gtest.h>

#include <numbers>

#include "mrnav/error.hpp"
#include "mrnav/reward.hpp"
#include "support/checks.hpp"

using namespace mrnav;

TEST(Reward, MatchesScriptedOracle) {
  EXPECT_LT(checks::reward_oracle_max_error(20000, 11), 1e-12);
}

TEST(Reward, TerminalConstants) {
  const RewardConfig cfg;
  TransitionFacts f;
  f.prev_goal_distance = 3;
  f.goal_distance = 2;
  f.heading = {1, 0};
  f.goal_vector = {2, 0};
  f.min_laser = 0.1;
  f.delta_omega = 2.0;
  const std::pair<TerminalCause, double> cases[] = {{TerminalCause::goal, 1.0},
                                                    {TerminalCause::world_collision, -0.75},
                                                    {TerminalCause::robot_collision, -1.0},
                                                    {TerminalCause::timeout, 0.0}};
  for (const auto& [cause, want] : cases) {
    f.terminal = cause;
    EXPECT_EQ(compute_reward(f, RewardState::start(3), cfg, 0.25).first, want);
  }
}

TEST(Reward, DistanceTermAsymmetric) {
  const RewardConfig cfg;
  EXPECT_DOUBLE_EQ(reward_distance(0.06, cfg), 0.06 * 0.01);
  EXPECT_DOUBLE_EQ(reward_distance(-0.06, cfg), -0.06 * 0.002);
  EXPECT_EQ(reward_distance(0.0, cfg), 0.0);
}

TEST(Reward, OrientationTerm) {
  const RewardConfig cfg;
  EXPECT_DOUBLE_EQ(reward_orientation({1, 0}, {3, 0}, cfg), 0.001);
  EXPECT_NEAR(reward_orientation({1, 0}, {0, 3}, cfg), 0.0, 1e-18);
  EXPECT_DOUBLE_EQ(reward_orientation({1, 0}, {-3, 0}, cfg), -0.0002);
}

TEST(Reward, OrientationRotationInvariant) {
  const RewardConfig cfg;
  Rng rng = make_rng(2);
  std::uniform_real_distribution<double> a(-std::numbers::pi, std::numbers::pi);
  for (int k = 0; k < 500; ++k) {
    const double h = a(rng), g = a(rng), rot = a(rng);
    const double r0 = reward_orientation(unit_from_angle(h), unit_from_angle(g) * 2.0, cfg);
    const double r1 = reward_orientation(unit_from_angle(h + rot), unit_from_angle(g + rot) * 2.0, cfg);
    EXPECT_NEAR(r0, r1, 1e-15);
  }
}

TEST(Reward, ShortestDistanceLatch) {
  const RewardConfig cfg;
  auto st = RewardState::start(5.0);
  auto [r1, s1] = reward_shortest_distance(4.0, st, cfg);
  EXPECT_DOUBLE_EQ(r1, 0.05);
  auto [r2, s2] = reward_shortest_distance(4.5, s1, cfg);
  EXPECT_EQ(r2, 0.0);
  auto [r3, s3] = reward_shortest_distance(3.9, s2, cfg);
  EXPECT_NEAR(r3, 0.1 * 0.05, 1e-15);
  EXPECT_DOUBLE_EQ(s3.shortest_distance, 3.9);
}

TEST(Reward, ShortestDistanceNeverIncreases) {
  const RewardConfig cfg;
  Rng rng = make_rng(8);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  auto st = RewardState::start(10.0);
  for (int k = 0; k < 1000; ++k) {
    const double before = st.shortest_distance;
    auto [r, next] = reward_shortest_distance(u(rng), st, cfg);
    EXPECT_LE(next.shortest_distance, before);
    EXPECT_GE(r, 0.0);
    st = next;
  }
}

TEST(Reward, MinLaserPenalty) {
  const RewardConfig cfg;
  EXPECT_EQ(reward_min_laser(0.45, cfg, 0.25), 0.0);
  EXPECT_EQ(reward_min_laser(2.0, cfg, 0.25), 0.0);
  EXPECT_NEAR(reward_min_laser(0.35, cfg, 0.25), -0.1 * 0.01, 1e-15);
}

TEST(Reward, TurnClassification) {
  EXPECT_EQ(classify_turn(0.2, 0.1), TurnClass::left);
  EXPECT_EQ(classify_turn(-0.2, 0.1), TurnClass::right);
  EXPECT_EQ(classify_turn(0.1, 0.1), TurnClass::straight);
  EXPECT_EQ(classify_turn(-0.05, 0.1), TurnClass::straight);
}

TEST(Reward, WiggleToleratesFewFlipsThenPenalizes) {
  const RewardConfig cfg;
  auto st = RewardState::start(5.0);
  std::vector<double> rewards;
  // Alternate hard left / hard right every step: a flip on every step after the first.
  for (int k = 0; k < 8; ++k) {
    auto [r, next] = reward_wiggle(k % 2 ? -3.0 : 3.0, st, cfg);
    rewards.push_back(r);
    st = next;
  }
  // Flips so far after step k: k. Penalty starts once more than 3 flips sit in the window.
  for (int k = 0; k < 4; ++k) EXPECT_EQ(rewards[k], 0.0) << k;
  EXPECT_NEAR(rewards[4], -(0.01 / 20) * 4, 1e-15);
  EXPECT_NEAR(rewards[7], -(0.01 / 20) * 7, 1e-15);
}

TEST(Reward, WiggleWindowForgetsOldFlips) {
  const RewardConfig cfg;
  auto st = RewardState::start(5.0);
  for (int k = 0; k < 6; ++k) st = reward_wiggle(k % 2 ? -3.0 : 3.0, st, cfg).second;
  double last = -1.0;
  for (int k = 0; k < 25; ++k) {
    auto [r, next] = reward_wiggle(0.0, st, cfg);
    last = r;
    st = next;
  }
  EXPECT_EQ(last, 0.0);
  EXPECT_EQ(st.flip_sum, 0u);
  EXPECT_LE(st.flips.size(), cfg.wiggle_period);
}

TEST(Reward, ConfigValidation) {
  RewardConfig c;
  EXPECT_NO_THROW(c.validate());
  c.d_pos = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RewardConfig{};
  c.wiggle_period = 2;
  EXPECT_THROW(c.validate(), ConfigError);
}
