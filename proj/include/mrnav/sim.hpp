#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mrnav/geometry.hpp"
#include "mrnav/reward.hpp"
#include "mrnav/rng.hpp"
#include "mrnav/world.hpp"

namespace mrnav {

// Velocity command of a differential-drive robot.
struct Action {
  double v_lin = 0.0;  // m/s
  double v_ang = 0.0;  // rad/s
  bool operator==(const Action&) const = default;
};

inline constexpr double kMinLinear = 0.0;
inline constexpr double kMaxLinear = 0.6;
inline constexpr double kMaxAngular = 1.5;

// Clamps into the admissible box; NaN components become 0.
Action clamp_action(Action a);

struct SimConfig {
  double dt = 0.1;
  double robot_radius = 0.25;
  double goal_radius = 0.3;
  std::size_t max_steps = 500;
  std::size_t lidar_beams = 1081;
  double lidar_fov = 4.71238898038469;  // 270 degrees
  double lidar_max_range = 20.0;
  double noise_sigma = 0.04;
  bool noise_enabled = true;
  // Spawn facing the goal instead of a random heading (scripted-policy checks).
  bool face_goal = false;

  void validate() const;
  // Beam angle relative to the heading, from -fov/2 to +fov/2 inclusive.
  double beam_angle(std::size_t i) const;
};

enum class AgentStatus : std::uint8_t { active, reached_goal, collided_world, collided_robot, timed_out };

std::string_view to_string(AgentStatus s);
std::optional<TerminalCause> terminal_cause(AgentStatus s);
AgentStatus status_for(TerminalCause c);

struct AgentState {
  Vec2 position;
  double heading = 0.0;
  Action velocity;  // command applied during the last step
  Vec2 goal;
  AgentStatus status = AgentStatus::active;
  RewardState reward;

  bool active() const { return status == AgentStatus::active; }
};

struct LidarScan {
  std::vector<double> ranges;  // beam 0 at -fov/2
  double min_range() const;
};

struct Observation {
  LidarScan lidar;
  Vec2 goal_direction;   // unit vector in the robot frame
  double goal_distance = 0.0;
  Action velocity;       // command of the previous step
};

inline constexpr std::size_t kStackFrames = 4;

// The last four observations, oldest first.
struct ObservationStack {
  std::array<Observation, kStackFrames> frames;

  static ObservationStack repeat(const Observation& o);
  void push(Observation o);
  const Observation& latest() const { return frames.back(); }
};

struct StepOutcome {
  std::size_t agent = 0;
  ObservationStack next;
  double reward = 0.0;
  bool done = false;
  std::optional<TerminalCause> cause;
};

// Exact unicycle arc integration; straight line when |v_ang| < 1e-9.
AgentState integrate_pose(AgentState state, Action action, double dt);

// First-hit distances against the world and the other robots' circles, clamped
// to the sensor range, plus optional Gaussian noise clamped to [0, max_range].
LidarScan simulate_lidar(const AgentState& self, std::span<const Vec2> other_robots,
                         const WorldMap& map, Rng& rng, const SimConfig& config);

// Terminal cause per agent (nullopt for no collision or inactive agents).
// Robot contact takes precedence over wall contact.
std::vector<std::optional<TerminalCause>> detect_collisions(std::span<const AgentState> states,
                                                            const WorldMap& map,
                                                            const SimConfig& config);

Observation make_observation(const AgentState& s, LidarScan scan);

struct AgentCommand {
  std::size_t agent = 0;
  Action action;
};

// One multi-robot episode. Owns its agents, clock and random stream; the map is
// shared read-only. Terminal agents leave the arena.
class Episode {
 public:
  Episode(std::shared_ptr<const WorldMap> map, SimConfig sim, RewardConfig reward, std::uint64_t seed);

  void reset(std::span<const ScenarioTask> tasks);
  // Samples tasks for n agents from the map's nodes with the episode stream.
  void reset_random(std::size_t n_agents);

  // Exactly one command per active agent. Throws ContractError otherwise.
  std::vector<StepOutcome> step(std::span<const AgentCommand> commands);

  const WorldMap& map() const { return *map_; }
  const SimConfig& sim_config() const { return sim_; }
  const RewardConfig& reward_config() const { return reward_; }
  std::size_t step_count() const { return step_; }
  std::span<const AgentState> agents() const { return agents_; }
  const ObservationStack& observation(std::size_t agent) const { return stacks_.at(agent); }
  std::vector<std::size_t> active_agents() const;
  bool done() const;

  // Travelled polyline per agent since reset (start position included).
  const std::vector<Vec2>& trail(std::size_t agent) const { return trails_.at(agent); }
  double travelled(std::size_t agent) const { return travelled_.at(agent); }
  const std::vector<ScenarioTask>& tasks() const { return tasks_; }

 private:
  std::vector<Vec2> active_positions_except(std::size_t agent) const;

  std::shared_ptr<const WorldMap> map_;
  SimConfig sim_;
  RewardConfig reward_;
  Rng rng_;
  std::size_t step_ = 0;
  std::vector<AgentState> agents_;
  std::vector<ObservationStack> stacks_;
  std::vector<std::vector<Vec2>> trails_;
  std::vector<double> travelled_;
  std::vector<ScenarioTask> tasks_;
};

}  // namespace mrnav
