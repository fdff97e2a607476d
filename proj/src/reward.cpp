#include "mrnav/reward.hpp"

#include <cmath>
#include <numbers>

#include "mrnav/error.hpp"

namespace mrnav {

void RewardConfig::validate() const {
  for (double v : {goal_reward, c_world, c_robot, d_pos, d_neg, alpha_pos, alpha_neg, l_pos, l_neg,
                   omega_neg, l_laser, omega_dir}) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ConfigError("reward factors must be finite and non-negative");
  }
  if (wiggle_changes < 1 || wiggle_period < wiggle_changes)
    throw ConfigError("reward config needs wiggle_period >= wiggle_changes >= 1");
}

TurnClass classify_turn(double delta_omega, double omega_dir) {
  if (delta_omega > omega_dir) return TurnClass::left;
  if (delta_omega < -omega_dir) return TurnClass::right;
  return TurnClass::straight;
}

RewardState RewardState::start(double initial_goal_distance) {
  RewardState s;
  s.prev_goal_distance = initial_goal_distance;
  s.shortest_distance = initial_goal_distance;
  return s;
}

double reward_distance(double delta_d, const RewardConfig& config) {
  return delta_d < 0.0 ? delta_d * config.d_neg : delta_d * config.d_pos;
}

double reward_orientation(Vec2 heading, Vec2 goal_vector, const RewardConfig& config) {
  if (goal_vector.x == 0.0 && goal_vector.y == 0.0) return 0.0;
  const double alpha = std::abs(std::atan2(std::abs(cross(heading, goal_vector)), dot(heading, goal_vector)));
  const double alpha_norm = 1.0 - 2.0 * alpha / std::numbers::pi;
  return alpha_norm < 0.0 ? alpha_norm * config.alpha_neg : alpha_norm * config.alpha_pos;
}

std::pair<double, RewardState> reward_shortest_distance(double goal_distance, RewardState state,
                                                        const RewardConfig& config) {
  if (goal_distance < state.shortest_distance) {
    const double r = (state.shortest_distance - goal_distance) * config.l_pos;
    state.shortest_distance = goal_distance;
    return {r, std::move(state)};
  }
  return {0.0, std::move(state)};
}

double reward_min_laser(double min_laser, const RewardConfig& config, double robot_radius) {
  const double threshold = robot_radius + config.l_laser;
  return min_laser < threshold ? (threshold - min_laser) * (-config.l_neg) : 0.0;
}

std::pair<double, RewardState> reward_wiggle(double delta_omega, RewardState state,
                                             const RewardConfig& config) {
  const TurnClass turn = classify_turn(delta_omega, config.omega_dir);
  const bool flipped = (turn == TurnClass::left && state.prev_turn == TurnClass::right) ||
                       (turn == TurnClass::right && state.prev_turn == TurnClass::left);
  state.prev_turn = turn;
  state.flips.push_back(flipped ? 1 : 0);
  state.flip_sum += flipped ? 1 : 0;
  while (state.flips.size() > config.wiggle_period) {
    state.flip_sum -= state.flips.front();
    state.flips.pop_front();
  }
  if (state.flip_sum > config.wiggle_changes) {
    const double r = -(config.omega_neg / static_cast<double>(config.wiggle_period)) *
                     static_cast<double>(state.flip_sum);
    return {r, std::move(state)};
  }
  return {0.0, std::move(state)};
}

std::pair<double, RewardState> compute_reward(const TransitionFacts& facts, RewardState state,
                                              const RewardConfig& config, double robot_radius) {
  if (facts.terminal) {
    switch (*facts.terminal) {
      case TerminalCause::goal: return {config.goal_reward, std::move(state)};
      case TerminalCause::world_collision: return {-config.c_world, std::move(state)};
      case TerminalCause::robot_collision: return {-config.c_robot, std::move(state)};
      case TerminalCause::timeout: return {0.0, std::move(state)};
    }
  }
  const double r_dist = reward_distance(facts.prev_goal_distance - facts.goal_distance, config);
  const double r_ori = reward_orientation(facts.heading, facts.goal_vector, config);
  auto [r_sd, s1] = reward_shortest_distance(facts.goal_distance, std::move(state), config);
  const double r_mld = reward_min_laser(facts.min_laser, config, robot_radius);
  auto [r_wig, s2] = reward_wiggle(facts.delta_omega, std::move(s1), config);
  s2.prev_goal_distance = facts.goal_distance;
  return {r_dist + r_ori + r_sd + r_mld + r_wig, std::move(s2)};
}

}  // namespace mrnav
