#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <utility>

#include "mrnav/geometry.hpp"

namespace mrnav {

// Weights of the shaped navigation reward. Defaults for the terminal and dense
// scaling factors are the published values; l_laser, omega_dir, wiggle_changes
// and wiggle_period are unpublished and only need to be sensible.
struct RewardConfig {
  double goal_reward = 1.0;       // theta_goal
  double c_world = 0.75;
  double c_robot = 1.0;
  double d_pos = 0.01;
  double d_neg = 0.002;
  double alpha_pos = 0.001;
  double alpha_neg = 0.0002;
  double l_pos = 0.05;
  double l_neg = 0.01;
  double omega_neg = 0.01;
  double l_laser = 0.2;           // meters beyond the robot radius
  double omega_dir = 0.1;         // rad/s dead band for turn classification
  std::size_t wiggle_changes = 3; // N: tolerated direction flips per window
  std::size_t wiggle_period = 20; // T: window length in steps

  // Throws ConfigError on negative factors or wiggle_period < wiggle_changes.
  void validate() const;
};

enum class TurnClass : std::uint8_t { straight, left, right };

TurnClass classify_turn(double delta_omega, double omega_dir);

// Per-agent episode memory required by the shortest-distance latch and the
// redirection window.
struct RewardState {
  double prev_goal_distance = 0.0;
  double shortest_distance = 0.0;  // non-increasing over the episode
  TurnClass prev_turn = TurnClass::straight;
  std::deque<std::uint8_t> flips;  // last wiggle_period values of R^t
  std::size_t flip_sum = 0;

  static RewardState start(double initial_goal_distance);
};

enum class TerminalCause : std::uint8_t { goal, world_collision, robot_collision, timeout };

struct TransitionFacts {
  std::optional<TerminalCause> terminal;
  double prev_goal_distance = 0.0;
  double goal_distance = 0.0;
  Vec2 heading;      // unit heading vector
  Vec2 goal_vector;  // goal - position
  double min_laser = 0.0;
  double delta_omega = 0.0;  // v_ang(t) - v_ang(t-1)
};

double reward_distance(double delta_d, const RewardConfig& config);
double reward_orientation(Vec2 heading, Vec2 goal_vector, const RewardConfig& config);
std::pair<double, RewardState> reward_shortest_distance(double goal_distance, RewardState state,
                                                        const RewardConfig& config);
double reward_min_laser(double min_laser, const RewardConfig& config, double robot_radius);
std::pair<double, RewardState> reward_wiggle(double delta_omega, RewardState state,
                                             const RewardConfig& config);

// Full reward: terminal constants, or the sum of the five dense terms.
// Pure: the returned state is the only effect.
std::pair<double, RewardState> compute_reward(const TransitionFacts& facts, RewardState state,
                                              const RewardConfig& config, double robot_radius);

}  // namespace mrnav
