#include "mrnav/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mrnav/error.hpp"

namespace mrnav {

Action clamp_action(Action a) {
  const double lin = std::isnan(a.v_lin) ? 0.0 : a.v_lin;
  const double ang = std::isnan(a.v_ang) ? 0.0 : a.v_ang;
  return {std::clamp(lin, kMinLinear, kMaxLinear), std::clamp(ang, -kMaxAngular, kMaxAngular)};
}

void SimConfig::validate() const {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(robot_radius > 0.0)) throw ConfigError("robot_radius must be positive");
  if (!(goal_radius > 0.0)) throw ConfigError("goal_radius must be positive");
  if (max_steps < 1) throw ConfigError("max_steps must be at least 1");
  if (lidar_beams < 2) throw ConfigError("lidar needs at least 2 beams");
  if (!(lidar_fov > 0.0) || lidar_fov > 2.0 * 3.141592653589793)
    throw ConfigError("lidar_fov must be in (0, 2 pi]");
  if (!(lidar_max_range > 0.0)) throw ConfigError("lidar_max_range must be positive");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
}

double SimConfig::beam_angle(std::size_t i) const {
  return -0.5 * lidar_fov + lidar_fov * static_cast<double>(i) / static_cast<double>(lidar_beams - 1);
}

std::string_view to_string(AgentStatus s) {
  switch (s) {
    case AgentStatus::active: return "active";
    case AgentStatus::reached_goal: return "reached_goal";
    case AgentStatus::collided_world: return "collided_world";
    case AgentStatus::collided_robot: return "collided_robot";
    case AgentStatus::timed_out: return "timed_out";
  }
  return "unknown";
}

std::optional<TerminalCause> terminal_cause(AgentStatus s) {
  switch (s) {
    case AgentStatus::reached_goal: return TerminalCause::goal;
    case AgentStatus::collided_world: return TerminalCause::world_collision;
    case AgentStatus::collided_robot: return TerminalCause::robot_collision;
    case AgentStatus::timed_out: return TerminalCause::timeout;
    case AgentStatus::active: break;
  }
  return std::nullopt;
}

AgentStatus status_for(TerminalCause c) {
  switch (c) {
    case TerminalCause::goal: return AgentStatus::reached_goal;
    case TerminalCause::world_collision: return AgentStatus::collided_world;
    case TerminalCause::robot_collision: return AgentStatus::collided_robot;
    case TerminalCause::timeout: return AgentStatus::timed_out;
  }
  return AgentStatus::active;
}

double LidarScan::min_range() const {
  if (ranges.empty()) return std::numeric_limits<double>::infinity();
  return *std::min_element(ranges.begin(), ranges.end());
}

ObservationStack ObservationStack::repeat(const Observation& o) {
  ObservationStack s;
  s.frames.fill(o);
  return s;
}

void ObservationStack::push(Observation o) {
  std::move(frames.begin() + 1, frames.end(), frames.begin());
  frames.back() = std::move(o);
}

AgentState integrate_pose(AgentState state, Action action, double dt) {
  const double h0 = state.heading;
  const double w = action.v_ang;
  const double v = action.v_lin;
  if (std::abs(w) < 1e-9) {
    state.position += Vec2{std::cos(h0), std::sin(h0)} * (v * dt);
  } else {
    const double h1 = h0 + w * dt;
    const double r = v / w;
    state.position += Vec2{r * (std::sin(h1) - std::sin(h0)), r * (std::cos(h0) - std::cos(h1))};
  }
  state.heading = wrap_angle(h0 + w * dt);
  state.velocity = action;
  return state;
}

LidarScan simulate_lidar(const AgentState& self, std::span<const Vec2> other_robots,
                         const WorldMap& map, Rng& rng, const SimConfig& config) {
  LidarScan scan;
  scan.ranges.resize(config.lidar_beams);
  std::normal_distribution<double> noise(0.0, config.noise_sigma);
  const double max_range = config.lidar_max_range;
  for (std::size_t i = 0; i < config.lidar_beams; ++i) {
    const Vec2 dir = unit_from_angle(self.heading + config.beam_angle(i));
    double d = max_range;
    for (const auto& s : map.segments) {
      if (auto t = ray_segment_hit(self.position, dir, s); t && *t < d) d = *t;
    }
    for (const Vec2& c : other_robots) {
      if (auto t = ray_circle_hit(self.position, dir, c, config.robot_radius); t && *t < d) d = *t;
    }
    if (config.noise_enabled && config.noise_sigma > 0.0) d = std::clamp(d + noise(rng), 0.0, max_range);
    scan.ranges[i] = d;
  }
  return scan;
}

std::vector<std::optional<TerminalCause>> detect_collisions(std::span<const AgentState> states,
                                                            const WorldMap& map,
                                                            const SimConfig& config) {
  std::vector<std::optional<TerminalCause>> out(states.size());
  const double contact = 2.0 * config.robot_radius;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!states[i].active()) continue;
    for (std::size_t j = i + 1; j < states.size(); ++j) {
      if (!states[j].active()) continue;
      if ((states[i].position - states[j].position).norm() < contact) {
        out[i] = TerminalCause::robot_collision;
        out[j] = TerminalCause::robot_collision;
      }
    }
  }
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!states[i].active() || out[i]) continue;
    if (circle_overlaps_world(states[i].position, config.robot_radius, map))
      out[i] = TerminalCause::world_collision;
  }
  return out;
}

Observation make_observation(const AgentState& s, LidarScan scan) {
  Observation o;
  o.lidar = std::move(scan);
  const Vec2 g = s.goal - s.position;
  o.goal_distance = g.norm();
  o.goal_direction = o.goal_distance > 0.0 ? to_body_frame(g / o.goal_distance, s.heading) : Vec2{1.0, 0.0};
  o.velocity = s.velocity;
  return o;
}

Episode::Episode(std::shared_ptr<const WorldMap> map, SimConfig sim, RewardConfig reward, std::uint64_t seed)
    : map_(std::move(map)), sim_(sim), reward_(reward), rng_(seed) {
  if (!map_) throw ContractError("episode needs a world map");
  sim_.validate();
  reward_.validate();
}

void Episode::reset_random(std::size_t n_agents) {
  const auto tasks = sample_tasks(*map_, n_agents, rng_);
  reset(tasks);
}

void Episode::reset(std::span<const ScenarioTask> tasks) {
  const std::size_t n = tasks.size();
  tasks_.assign(tasks.begin(), tasks.end());
  agents_.assign(n, AgentState{});
  stacks_.assign(n, ObservationStack{});
  trails_.assign(n, {});
  travelled_.assign(n, 0.0);
  step_ = 0;
  std::uniform_real_distribution<double> heading(-3.141592653589793, 3.141592653589793);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = tasks[i];
    if (t.start >= map_->nodes.size() || t.goal >= map_->nodes.size())
      throw ContractError("task references a node outside the map");
    auto& a = agents_[i];
    a.position = map_->nodes[t.start];
    a.goal = map_->nodes[t.goal];
    a.heading = heading(rng_);
    if (sim_.face_goal && a.goal != a.position) a.heading = std::atan2(a.goal.y - a.position.y, a.goal.x - a.position.x);
    a.reward = RewardState::start((a.goal - a.position).norm());
    trails_[i].push_back(a.position);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto others = active_positions_except(i);
    stacks_[i] = ObservationStack::repeat(
        make_observation(agents_[i], simulate_lidar(agents_[i], others, *map_, rng_, sim_)));
  }
}

std::vector<std::size_t> Episode::active_agents() const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < agents_.size(); ++i)
    if (agents_[i].active()) ids.push_back(i);
  return ids;
}

bool Episode::done() const {
  return std::none_of(agents_.begin(), agents_.end(), [](const AgentState& a) { return a.active(); });
}

std::vector<Vec2> Episode::active_positions_except(std::size_t agent) const {
  std::vector<Vec2> out;
  out.reserve(agents_.size());
  for (std::size_t j = 0; j < agents_.size(); ++j)
    if (j != agent && agents_[j].active()) out.push_back(agents_[j].position);
  return out;
}

std::vector<StepOutcome> Episode::step(std::span<const AgentCommand> commands) {
  const std::size_t n = agents_.size();
  std::vector<std::optional<Action>> chosen(n);
  for (const auto& c : commands) {
    if (c.agent >= n) throw ContractError("command for unknown agent " + std::to_string(c.agent));
    if (!agents_[c.agent].active())
      throw ContractError("command for terminal agent " + std::to_string(c.agent));
    if (chosen[c.agent]) throw ContractError("two commands for agent " + std::to_string(c.agent));
    chosen[c.agent] = clamp_action(c.action);
  }
  std::vector<std::size_t> movers;
  for (std::size_t i = 0; i < n; ++i) {
    if (!agents_[i].active()) continue;
    if (!chosen[i]) throw ContractError("missing command for active agent " + std::to_string(i));
    movers.push_back(i);
  }

  // Synchronous pose update.
  std::vector<double> delta_omega(n, 0.0);
  std::vector<double> prev_distance(n, 0.0);
  for (std::size_t i : movers) {
    auto& a = agents_[i];
    delta_omega[i] = chosen[i]->v_ang - a.velocity.v_ang;
    prev_distance[i] = a.reward.prev_goal_distance;
    const Vec2 before = a.position;
    a = integrate_pose(std::move(a), *chosen[i], sim_.dt);
    travelled_[i] += (a.position - before).norm();
    trails_[i].push_back(a.position);
  }
  ++step_;

  auto causes = detect_collisions(agents_, *map_, sim_);
  for (std::size_t i : movers) {
    if (causes[i]) continue;
    if ((agents_[i].goal - agents_[i].position).norm() < sim_.goal_radius) causes[i] = TerminalCause::goal;
    else if (step_ >= sim_.max_steps) causes[i] = TerminalCause::timeout;
  }
  for (std::size_t i : movers)
    if (causes[i]) agents_[i].status = status_for(*causes[i]);

  std::vector<StepOutcome> outcomes;
  outcomes.reserve(movers.size());
  for (std::size_t i : movers) {
    auto& a = agents_[i];
    const auto others = active_positions_except(i);
    Observation obs = make_observation(a, simulate_lidar(a, others, *map_, rng_, sim_));

    TransitionFacts facts;
    facts.terminal = causes[i];
    facts.prev_goal_distance = prev_distance[i];
    facts.goal_distance = obs.goal_distance;
    facts.heading = unit_from_angle(a.heading);
    facts.goal_vector = a.goal - a.position;
    facts.min_laser = obs.lidar.min_range();
    facts.delta_omega = delta_omega[i];
    auto [r, next_state] = compute_reward(facts, std::move(a.reward), reward_, sim_.robot_radius);
    a.reward = std::move(next_state);

    stacks_[i].push(std::move(obs));
    outcomes.push_back({i, stacks_[i], r, causes[i].has_value(), causes[i]});
  }
  return outcomes;
}

}  // namespace mrnav
