#include "mrnav/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "mrnav/error.hpp"
#include "parallel.hpp"

#ifndef MRNAV_VERSION
#define MRNAV_VERSION "dev"
#endif
#ifndef MRNAV_WORLDS_DIR
#define MRNAV_WORLDS_DIR "worlds"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace mrnav {

std::string code_version() { return MRNAV_VERSION; }

fs::path worlds_dir() {
  if (const char* env = std::getenv("MRNAV_WORLDS_DIR"); env && *env) return env;
  return MRNAV_WORLDS_DIR;
}

fs::path resolve_world(const std::string& name, const fs::path& base) {
  if (name.empty()) throw ConfigError("empty world name");
  const fs::path direct(name);
  if (direct.is_absolute() && fs::exists(direct)) return direct;
  if (!base.empty() && fs::exists(base / direct)) return base / direct;
  if (fs::exists(direct)) return direct;
  const fs::path bundled = worlds_dir() / (name + ".json");
  if (fs::exists(bundled)) return bundled;
  throw ConfigError("world '" + name + "' not found (looked for a file and for " + bundled.string() + ")");
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Strict field reader: unknown keys and type mismatches are config errors.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
  }
  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }
  void size(const char* key, std::size_t& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw ConfigError(where_ + "." + key + ": expected a non-negative integer");
    out = v.get<std::size_t>();
  }
  void optional_size(const char* key, std::optional<std::size_t>& out) {
    used_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    std::size_t v = 0;
    size(key, v);
    out = v;
  }
  const json* sub(const char* key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

HeadKind parse_head(const std::string& s) {
  if (s == "discrete") return HeadKind::discrete;
  if (s == "continuous") return HeadKind::continuous;
  throw ConfigError("action_space must be 'discrete' or 'continuous'");
}

std::string head_name(HeadKind h) { return h == HeadKind::discrete ? "discrete" : "continuous"; }

void read_train(const json& j, TrainConfig& t) {
  Fields f(j, "train");
  std::string space = head_name(t.action_space);
  f.get("action_space", space);
  t.action_space = parse_head(space);
  f.get("learning_rate", t.learning_rate);
  f.get("gamma", t.gamma);
  f.get("gae_lambda", t.gae_lambda);
  f.get("clip_epsilon", t.clip_epsilon);
  f.size("minibatch_size", t.minibatch_size);
  f.size("rollout_length", t.rollout_length);
  f.size("epochs", t.epochs);
  f.get("entropy_coef", t.entropy_coef);
  f.get("value_coef", t.value_coef);
  f.get("max_grad_norm", t.max_grad_norm);
  f.get("normalize_advantages", t.normalize_advantages);
  f.size("replay_capacity", t.replay_capacity);
  f.size("batch_size", t.batch_size);
  f.size("target_update_interval", t.target_update_interval);
  f.get("epsilon_start", t.epsilon_start);
  f.get("epsilon_end", t.epsilon_end);
  f.get("epsilon_decay_fraction", t.epsilon_decay_fraction);
  f.size("env_copies", t.env_copies);
  f.size("threads", t.threads);
}

json train_json(const TrainConfig& t) {
  return {{"action_space", head_name(t.action_space)},
          {"learning_rate", t.learning_rate},
          {"gamma", t.gamma},
          {"gae_lambda", t.gae_lambda},
          {"clip_epsilon", t.clip_epsilon},
          {"minibatch_size", t.minibatch_size},
          {"rollout_length", t.rollout_length},
          {"epochs", t.epochs},
          {"entropy_coef", t.entropy_coef},
          {"value_coef", t.value_coef},
          {"max_grad_norm", t.max_grad_norm},
          {"normalize_advantages", t.normalize_advantages},
          {"replay_capacity", t.replay_capacity},
          {"batch_size", t.batch_size},
          {"target_update_interval", t.target_update_interval},
          {"epsilon_start", t.epsilon_start},
          {"epsilon_end", t.epsilon_end},
          {"epsilon_decay_fraction", t.epsilon_decay_fraction},
          {"env_copies", t.env_copies}};
  // threads is left out on purpose: results do not depend on it.
}

void read_reward(const json& j, RewardConfig& r) {
  Fields f(j, "reward");
  f.get("goal_reward", r.goal_reward);
  f.get("c_world", r.c_world);
  f.get("c_robot", r.c_robot);
  f.get("d_pos", r.d_pos);
  f.get("d_neg", r.d_neg);
  f.get("alpha_pos", r.alpha_pos);
  f.get("alpha_neg", r.alpha_neg);
  f.get("l_pos", r.l_pos);
  f.get("l_neg", r.l_neg);
  f.get("omega_neg", r.omega_neg);
  f.get("l_laser", r.l_laser);
  f.get("omega_dir", r.omega_dir);
  f.size("wiggle_changes", r.wiggle_changes);
  f.size("wiggle_period", r.wiggle_period);
}

json reward_json(const RewardConfig& r) {
  return {{"goal_reward", r.goal_reward}, {"c_world", r.c_world},     {"c_robot", r.c_robot},
          {"d_pos", r.d_pos},             {"d_neg", r.d_neg},         {"alpha_pos", r.alpha_pos},
          {"alpha_neg", r.alpha_neg},     {"l_pos", r.l_pos},         {"l_neg", r.l_neg},
          {"omega_neg", r.omega_neg},     {"l_laser", r.l_laser},     {"omega_dir", r.omega_dir},
          {"wiggle_changes", r.wiggle_changes}, {"wiggle_period", r.wiggle_period}};
}

void read_sim(const json& j, SimConfig& s) {
  Fields f(j, "sim");
  f.get("dt", s.dt);
  f.get("robot_radius", s.robot_radius);
  f.get("goal_radius", s.goal_radius);
  f.size("max_steps", s.max_steps);
  f.size("lidar_beams", s.lidar_beams);
  double fov_deg = s.lidar_fov * 180.0 / std::numbers::pi;
  f.get("lidar_fov_deg", fov_deg);
  s.lidar_fov = fov_deg * std::numbers::pi / 180.0;
  f.get("lidar_max_range", s.lidar_max_range);
  f.get("noise_sigma", s.noise_sigma);
  f.get("noise_enabled", s.noise_enabled);
  f.get("face_goal", s.face_goal);
}

json sim_json(const SimConfig& s) {
  return {{"dt", s.dt},
          {"robot_radius", s.robot_radius},
          {"goal_radius", s.goal_radius},
          {"max_steps", s.max_steps},
          {"lidar_beams", s.lidar_beams},
          {"lidar_fov_deg", s.lidar_fov * 180.0 / std::numbers::pi},
          {"lidar_max_range", s.lidar_max_range},
          {"noise_sigma", s.noise_sigma},
          {"noise_enabled", s.noise_enabled},
          {"face_goal", s.face_goal}};
}

void read_stop(const json& j, StopCriteria& s) {
  Fields f(j, "stop");
  f.optional_size("max_episodes", s.max_episodes);
  f.optional_size("max_updates", s.max_updates);
  if (const json* t = f.sub("success_threshold"); t && !t->is_null()) {
    if (!t->is_number()) throw ConfigError("stop.success_threshold: expected a number");
    s.success_threshold = t->get<double>();
  }
  f.size("success_window", s.success_window);
}

json stop_json(const StopCriteria& s) {
  json j;
  j["max_episodes"] = s.max_episodes ? json(*s.max_episodes) : json(nullptr);
  j["max_updates"] = s.max_updates ? json(*s.max_updates) : json(nullptr);
  j["success_threshold"] = s.success_threshold ? json(*s.success_threshold) : json(nullptr);
  j["success_window"] = s.success_window;
  return j;
}

}  // namespace

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  RunConfig c;
  c.base_dir = base_dir;
  Fields f(j, "config");
  std::string algo = "ppo";
  f.get("algorithm", algo);
  c.train = TrainConfig::for_algorithm(parse_algorithm(algo));
  if (const json* t = f.sub("train")) read_train(*t, c.train);
  if (const json* r = f.sub("reward")) read_reward(*r, c.reward);
  if (const json* s = f.sub("sim")) read_sim(*s, c.sim);
  if (const json* s = f.sub("stop")) read_stop(*s, c.stop);
  f.get("seed", c.seed);
  std::string out = c.output_dir.string();
  f.get("output_dir", out);
  c.output_dir = out;
  f.size("checkpoint_every", c.checkpoint_every);
  const json* worlds = f.sub("worlds");
  if (!worlds || !worlds->is_array() || worlds->empty()) throw ConfigError("config: 'worlds' must be a non-empty list");
  for (const auto& w : *worlds) {
    WorldEntry e;
    if (w.is_string()) {
      e.file = w.get<std::string>();
    } else {
      Fields wf(w, "worlds[]");
      wf.get("file", e.file);
      wf.size("agents", e.agents);
      wf.size("copies", e.copies);
      if (e.file.empty()) throw ConfigError("worlds[]: 'file' is required");
    }
    c.worlds.push_back(std::move(e));
  }
  c.train.validate();
  c.reward.validate();
  c.sim.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

json to_json(const RunConfig& c) {
  json worlds = json::array();
  for (const auto& w : c.worlds) worlds.push_back({{"file", w.file}, {"agents", w.agents}, {"copies", w.copies}});
  return {{"algorithm", std::string(to_string(c.train.algorithm))},
          {"train", train_json(c.train)},
          {"reward", reward_json(c.reward)},
          {"sim", sim_json(c.sim)},
          {"stop", stop_json(c.stop)},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"worlds", worlds}};
}

std::string config_hash(const RunConfig& c) { return hex64(fnv1a(to_json(c).dump())); }

std::vector<WorldSpec> load_world_specs(const RunConfig& c) {
  std::vector<WorldSpec> specs;
  for (const auto& w : c.worlds) {
    auto map = std::make_shared<const WorldMap>(load_world(resolve_world(w.file, c.base_dir), c.sim.robot_radius));
    WorldSpec s;
    s.agents = w.agents ? w.agents : map->recommended_agents;
    const std::size_t capacity = map->tasks.empty() ? map->nodes.size() : map->tasks.size();
    if (s.agents > capacity)
      throw ConfigError("world '" + map->name + "' can host at most " + std::to_string(capacity) + " agents");
    s.copies = w.copies;
    s.map = std::move(map);
    specs.push_back(std::move(s));
  }
  return specs;
}

// ---------------------------------------------------------------------------
// Controllers

namespace {

class NetworkController final : public Controller {
 public:
  explicit NetworkController(std::shared_ptr<const PolicyNetwork<float>> net) : net_(std::move(net)) {}
  std::vector<Action> act(const Episode& ep, std::span<const std::size_t> agents) override {
    const auto& shape = net_->shape();
    Matrix<float> in(static_cast<Eigen::Index>(shape.input_size()), static_cast<Eigen::Index>(agents.size()));
    for (std::size_t k = 0; k < agents.size(); ++k)
      encode_observation<float>(ep.observation(agents[k]), shape, in.col(static_cast<Eigen::Index>(k)).data());
    const auto out = net_->forward(in);
    std::vector<Action> actions(agents.size());
    for (std::size_t k = 0; k < agents.size(); ++k) actions[k] = greedy_action(distribution_at(out, k, shape.head)).action;
    return actions;
  }

 private:
  std::shared_ptr<const PolicyNetwork<float>> net_;
};

class ConstantController final : public Controller {
 public:
  explicit ConstantController(Action a) : a_(a) {}
  std::vector<Action> act(const Episode&, std::span<const std::size_t> agents) override {
    return std::vector<Action>(agents.size(), a_);
  }

 private:
  Action a_;
};

class AStarController final : public Controller {
 public:
  AStarController(double resolution, double margin, FollowerConfig follower)
      : resolution_(resolution), margin_(margin), follower_(follower) {}
  void reset(const Episode& ep) override {
    followers_.clear();
    const auto agents = ep.agents();
    for (const auto& a : agents) {
      auto path = plan_in_world(ep.map(), a.position, a.goal, ep.sim_config().robot_radius, resolution_, margin_);
      if (path) followers_.emplace_back(PathFollower(path->waypoints, follower_));
      else followers_.emplace_back(std::nullopt);
    }
  }
  std::vector<Action> act(const Episode& ep, std::span<const std::size_t> agents) override {
    std::vector<Action> out(agents.size());
    for (std::size_t k = 0; k < agents.size(); ++k) {
      auto& f = followers_.at(agents[k]);
      if (f) out[k] = f->command(ep.agents()[agents[k]]);
    }
    return out;
  }

 private:
  double resolution_, margin_;
  FollowerConfig follower_;
  std::vector<std::optional<PathFollower>> followers_;
};

}  // namespace

ControllerFactory network_controller(std::shared_ptr<const PolicyNetwork<float>> net) {
  return [net] { return std::make_unique<NetworkController>(net); };
}

ControllerFactory constant_controller(Action a) {
  return [a] { return std::make_unique<ConstantController>(a); };
}

ControllerFactory astar_controller(double resolution, double margin, FollowerConfig follower) {
  return [=] { return std::make_unique<AStarController>(resolution, margin, follower); };
}

ControllerFactory make_controller(const PolicySpec& spec, const SimConfig& sim, std::string* hash) {
  if (spec.kind == "network") {
    if (spec.checkpoint.empty()) throw ConfigError("the network policy needs --checkpoint");
    std::string meta;
    auto net = std::make_shared<const PolicyNetwork<float>>(load_checkpoint(spec.checkpoint, &meta));
    check_compatible(net->shape(), sim);
    if (hash && !meta.empty()) {
      try {
        *hash = json::parse(meta).value("config_hash", "");
      } catch (const json::exception&) {
      }
    }
    return network_controller(std::move(net));
  }
  if (spec.kind == "astar") return astar_controller();
  if (spec.kind == "straight") return constant_controller({kMaxLinear, 0.0});
  if (spec.kind == "spin") return constant_controller({0.0, kMaxAngular});
  throw ConfigError("unknown policy '" + spec.kind + "' (network, astar, straight, spin)");
}

std::optional<PlannedPath> plan_in_world(const WorldMap& map, Vec2 start, Vec2 goal, double robot_radius,
                                         double resolution, double margin) {
  for (double inflation : {robot_radius + margin, robot_radius}) {
    const auto grid = rasterize(map, resolution, inflation);
    if (grid.occupied(grid.cell_at(start)) || grid.occupied(grid.cell_at(goal))) continue;
    return plan(grid, start, goal);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

struct AgentResult {
  AgentStatus status = AgentStatus::active;
  std::size_t steps = 0;
  double travelled = 0.0;
  double remaining = 0.0;  // distance to the goal point at the end
  ScenarioTask task;
};

std::vector<AgentResult> run_episode(const ControllerFactory& policy, std::shared_ptr<const WorldMap> map,
                                     const SimConfig& sim, const RewardConfig& reward, std::uint64_t seed,
                                     std::size_t agents, const std::vector<ScenarioTask>* tasks = nullptr) {
  Episode ep(std::move(map), sim, reward, seed);
  if (tasks) ep.reset(*tasks);
  else ep.reset_random(agents);
  auto controller = policy();
  controller->reset(ep);
  std::vector<AgentResult> res(ep.agents().size());
  while (!ep.done()) {
    const auto active = ep.active_agents();
    const auto actions = controller->act(ep, active);
    if (actions.size() != active.size()) throw ContractError("controller returned the wrong number of actions");
    std::vector<AgentCommand> cmds(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) cmds[k] = {active[k], actions[k]};
    for (const auto& o : ep.step(cmds))
      if (o.done) res[o.agent].steps = ep.step_count();
  }
  for (std::size_t i = 0; i < res.size(); ++i) {
    res[i].status = ep.agents()[i].status;
    res[i].travelled = ep.travelled(i);
    res[i].remaining = (ep.agents()[i].goal - ep.agents()[i].position).norm();
    res[i].task = ep.tasks()[i];
  }
  return res;
}

}  // namespace

EvalRow evaluate(const ControllerFactory& policy, const WorldMap& map, const SimConfig& sim,
                 const RewardConfig& reward, const EvalOptions& options) {
  const std::size_t n = options.agents ? options.agents : map.recommended_agents;
  const std::size_t capacity = map.tasks.empty() ? map.nodes.size() : map.tasks.size();
  if (n == 0 || n > capacity)
    throw ConfigError("world '" + map.name + "' can host 1.." + std::to_string(capacity) + " agents, asked for " +
                      std::to_string(n));
  const std::size_t world_episodes = (options.episodes + n - 1) / n;
  auto shared = std::make_shared<const WorldMap>(map);

  std::vector<std::vector<AgentResult>> results(world_episodes);
  detail::parallel_for(world_episodes, detail::resolve_threads(options.threads), [&](std::size_t k) {
    results[k] = run_episode(policy, shared, sim, reward, derive_seed(options.seed, k), n);
  });

  EvalRow row;
  row.world = map.name;
  row.agents = n;
  std::optional<OccupancyGrid> wide, tight;
  std::map<std::pair<std::size_t, std::size_t>, std::optional<double>> astar_cache;
  double steps = 0.0, path = 0.0, ref = 0.0;
  for (const auto& ep : results) {
    for (const auto& a : ep) {
      ++row.episodes;
      steps += static_cast<double>(a.steps);
      switch (a.status) {
        case AgentStatus::reached_goal: ++row.reached; break;
        case AgentStatus::timed_out: ++row.timed_out; break;
        case AgentStatus::collided_world: ++row.collided_world; break;
        case AgentStatus::collided_robot: ++row.collided_robot; break;
        case AgentStatus::active: throw ContractError("episode ended with an active agent");
      }
      if (!options.compute_astar || a.status != AgentStatus::reached_goal) continue;
      const auto key = std::make_pair(a.task.start, a.task.goal);
      auto it = astar_cache.find(key);
      if (it == astar_cache.end()) {
        auto p = plan_in_world(map, map.nodes[key.first], map.nodes[key.second], sim.robot_radius);
        it = astar_cache.emplace(key, p ? std::optional<double>(p->length) : std::nullopt).first;
      }
      if (!it->second) continue;
      ++row.path_samples;
      // Complete the trail to the goal point, as the planner's path does.
      path += a.travelled + a.remaining;
      ref += *it->second;
    }
  }
  if (row.episodes) row.mean_steps = steps / static_cast<double>(row.episodes);
  if (row.path_samples) {
    row.mean_path_length = path / static_cast<double>(row.path_samples);
    row.mean_astar_length = ref / static_cast<double>(row.path_samples);
  }
  return row;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  char line[256];
  out << "# config_hash=" << (r.config_hash.empty() ? "none" : r.config_hash) << " seed=" << r.seed
      << " max_steps=" << r.max_steps << " policy=" << r.policy << '\n';
  std::snprintf(line, sizeof line, "%-16s %6s %10s %10s %12s %9s %10s %14s\n", "world", "agents", "reached %",
                "timeout %", "collision %", "episodes", "mean steps", "path / A* [m]");
  out << line;
  for (const auto& row : r.rows) {
    char paths[32] = "-";
    if (row.path_samples)
      std::snprintf(paths, sizeof paths, "%.2f / %.2f", row.mean_path_length, row.mean_astar_length);
    std::snprintf(line, sizeof line, "%-16s %6zu %10.2f %10.2f %12.2f %9zu %10.1f %14s\n", row.world.c_str(),
                  row.agents, row.reached_pct(), row.timeout_pct(), row.collision_pct(), row.episodes,
                  row.mean_steps, paths);
    out << line;
  }
  return out.str();
}

json to_json(const EvalReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"world", row.world},
                    {"agents", row.agents},
                    {"episodes", row.episodes},
                    {"reached_goal_pct", row.reached_pct()},
                    {"timeout_pct", row.timeout_pct()},
                    {"collision_pct", row.collision_pct()},
                    {"reached_goal", row.reached},
                    {"timed_out", row.timed_out},
                    {"collided_world", row.collided_world},
                    {"collided_robot", row.collided_robot},
                    {"mean_steps", row.mean_steps},
                    {"path_samples", row.path_samples},
                    {"mean_path_length", row.mean_path_length},
                    {"mean_astar_length", row.mean_astar_length}});
  }
  return {{"config_hash", r.config_hash}, {"seed", r.seed},  {"max_steps", r.max_steps},
          {"policy", r.policy},           {"rows", rows},    {"code_version", code_version()}};
}

// ---------------------------------------------------------------------------
// A* comparison

double CompareResult::completed_length() const {
  if (trail.empty()) return 0.0;
  if (outcome != AgentStatus::reached_goal || !astar || astar->waypoints.empty()) return travelled;
  return travelled + (astar->waypoints.back() - trail.back()).norm();
}

double CompareResult::ratio() const {
  return astar && astar->length > 0.0 ? completed_length() / astar->length : 0.0;
}

CompareResult compare_astar(const ControllerFactory& policy, std::shared_ptr<const WorldMap> map,
                            const ScenarioTask& task, const SimConfig& sim, const RewardConfig& reward,
                            std::uint64_t seed) {
  CompareResult r;
  r.world = map->name;
  r.task = task;
  r.astar = plan_in_world(*map, map->nodes.at(task.start), map->nodes.at(task.goal), sim.robot_radius);
  Episode ep(map, sim, reward, seed);
  const std::vector<ScenarioTask> tasks{task};
  ep.reset(tasks);
  auto controller = policy();
  controller->reset(ep);
  while (!ep.done()) {
    const auto active = ep.active_agents();
    const auto actions = controller->act(ep, active);
    const AgentCommand cmd{0, actions.at(0)};
    ep.step(std::span(&cmd, 1));
  }
  r.trail = ep.trail(0);
  r.travelled = ep.travelled(0);
  r.outcome = ep.agents()[0].status;
  r.steps = ep.step_count();
  return r;
}

void write_compare(const CompareResult& r, const fs::path& out_dir, const std::string& hash) {
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "overlay.csv");
    if (!out) throw Error("cannot write " + (out_dir / "overlay.csv").string());
    out << "# config_hash=" << hash << '\n' << "series,index,x,y\n";
    out.precision(17);
    for (std::size_t i = 0; i < r.trail.size(); ++i) out << "agent," << i << ',' << r.trail[i].x << ',' << r.trail[i].y << '\n';
    if (r.astar)
      for (std::size_t i = 0; i < r.astar->waypoints.size(); ++i)
        out << "astar," << i << ',' << r.astar->waypoints[i].x << ',' << r.astar->waypoints[i].y << '\n';
  }
  json j = {{"config_hash", hash},
            {"world", r.world},
            {"start", r.task.start},
            {"goal", r.task.goal},
            {"outcome", std::string(to_string(r.outcome))},
            {"steps", r.steps},
            {"travelled", r.travelled},
            {"completed_length", r.completed_length()},
            {"astar_found", r.astar.has_value()},
            {"astar_length", r.astar ? json(r.astar->length) : json(nullptr)},
            {"ratio", r.astar ? json(r.ratio()) : json(nullptr)}};
  std::ofstream out(out_dir / "compare.json");
  if (!out) throw Error("cannot write " + (out_dir / "compare.json").string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Commands

namespace {

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw Error("cannot create output directory " + p.string());
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

fs::path checkpoint_name(std::size_t update) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "update_%06zu.bin", update);
  return buf;
}

}  // namespace

TrainSummary cmd_train(const RunConfig& config, const TrainCallbacks& observer) {
  if (!config.stop.max_episodes && !config.stop.max_updates)
    throw ConfigError("stop: set max_episodes or max_updates");
  const auto worlds = load_world_specs(config);
  TrainSummary summary;
  summary.output_dir = config.output_dir;
  summary.config_hash = config_hash(config);
  const fs::path ckdir = config.output_dir / "checkpoints";
  ensure_dir(ckdir);

  json manifest = {{"config_hash", summary.config_hash},
                   {"seed", config.seed},
                   {"code_version", code_version()},
                   {"config", to_json(config)}};
  write_json(config.output_dir / "manifest.json", manifest);

  std::ofstream log(config.output_dir / "learning_log.csv");
  if (!log) throw Error("cannot write learning log in " + config.output_dir.string());
  log << "# config_hash=" << summary.config_hash << '\n' << "episode,world,outcome,steps,sum_reward\n";

  const HeadKind head = config.train.algorithm == Algorithm::ddqn ? HeadKind::discrete : config.train.action_space;
  PolicyNetwork<float> initial(network_shape_for(config.sim, head));
  Rng init_rng = make_rng(config.seed, 3);
  initial.initialize(init_rng);

  auto save = [&](const PolicyNetwork<float>& net, std::size_t update) {
    const json meta = {{"config_hash", summary.config_hash}, {"update", update}};
    const fs::path p = ckdir / checkpoint_name(update);
    save_checkpoint(net, p, meta.dump());
    summary.final_checkpoint = p;
  };
  save(initial, 0);

  TrainCallbacks cb;
  cb.on_episode = [&](const EpisodeRecord& e) {
    log << e.episode << ',' << e.world << ',' << to_string(e.outcome) << ',' << e.steps << ','
        << format_double(e.sum_reward) << '\n';
    if (observer.on_episode) observer.on_episode(e);
  };
  cb.on_update = [&](std::size_t n, const PolicyNetwork<float>& net, const UpdateStats& st) {
    if (config.checkpoint_every && n % config.checkpoint_every == 0) save(net, n);
    if (observer.on_update) observer.on_update(n, net, st);
  };
  cb.should_stop = observer.should_stop;
  auto result = train_loop(worlds, config.sim, config.reward, config.train, config.seed, config.stop, cb,
                           std::move(initial));
  if (result.updates > 0 && (config.checkpoint_every == 0 || result.updates % config.checkpoint_every != 0))
    save(result.params, result.updates);
  log.flush();
  if (!log) throw Error("failed writing the learning log");

  summary.updates = result.updates;
  summary.episodes = result.log.size();
  summary.threshold_reached = result.threshold_reached;
  manifest["result"] = {{"updates", summary.updates},
                        {"episodes", summary.episodes},
                        {"threshold_reached", summary.threshold_reached},
                        {"episodes_at_threshold", result.episodes_at_threshold},
                        {"final_checkpoint", summary.final_checkpoint.filename().string()}};
  write_json(config.output_dir / "manifest.json", manifest);
  return summary;
}

EvalReport cmd_eval(const EvalCommand& cmd) {
  if (cmd.worlds.empty()) throw ConfigError("eval needs --world");
  SimConfig sim = cmd.config ? cmd.config->sim : SimConfig{};
  const RewardConfig reward = cmd.config ? cmd.config->reward : RewardConfig{};
  sim.max_steps = cmd.max_steps;
  sim.validate();
  EvalReport report;
  report.seed = cmd.seed;
  report.max_steps = cmd.max_steps;
  report.policy = cmd.policy.kind;
  if (cmd.config) report.config_hash = config_hash(*cmd.config);
  std::string ck_hash;
  const auto policy = make_controller(cmd.policy, sim, &ck_hash);
  if (report.config_hash.empty()) report.config_hash = ck_hash;
  const fs::path base = cmd.config ? cmd.config->base_dir : fs::path{};
  for (std::size_t w = 0; w < cmd.worlds.size(); ++w) {
    const WorldMap map = load_world(resolve_world(cmd.worlds[w], base), sim.robot_radius);
    EvalOptions opt;
    opt.world = cmd.worlds[w];
    opt.agents = cmd.agents;
    opt.episodes = cmd.episodes;
    opt.seed = derive_seed(cmd.seed, w);
    opt.threads = cmd.threads;
    report.rows.push_back(evaluate(policy, map, sim, reward, opt));
  }
  if (!cmd.out.empty()) {
    ensure_dir(cmd.out);
    std::ofstream txt(cmd.out / "report.txt");
    if (!txt) throw Error("cannot write report in " + cmd.out.string());
    txt << format_report(report);
    write_json(cmd.out / "report.json", to_json(report));
  }
  return report;
}

CompareResult cmd_compare_astar(const CompareCommand& cmd) {
  SimConfig sim = cmd.config ? cmd.config->sim : SimConfig{};
  const RewardConfig reward = cmd.config ? cmd.config->reward : RewardConfig{};
  sim.max_steps = cmd.max_steps;
  sim.validate();
  std::string hash = cmd.config ? config_hash(*cmd.config) : std::string{};
  std::string ck_hash;
  const auto policy = make_controller(cmd.policy, sim, &ck_hash);
  if (hash.empty()) hash = ck_hash;
  const fs::path base = cmd.config ? cmd.config->base_dir : fs::path{};
  auto map = std::make_shared<const WorldMap>(load_world(resolve_world(cmd.world, base), sim.robot_radius));
  ScenarioTask task;
  if (cmd.task) {
    task = *cmd.task;
    if (task.start >= map->nodes.size() || task.goal >= map->nodes.size() || task.start == task.goal)
      throw ConfigError("task must name two different nodes of '" + map->name + "'");
  } else if (!map->tasks.empty()) {
    task = map->tasks.front();
  } else {
    Rng rng = make_rng(cmd.seed, 7);
    task = sample_tasks(*map, 1, rng).front();
  }
  auto r = compare_astar(policy, map, task, sim, reward, cmd.seed);
  if (!cmd.out.empty()) write_compare(r, cmd.out, hash.empty() ? "none" : hash);
  return r;
}

std::vector<CurvePoint> bin_curve(std::span<const EpisodeRecord> log, std::size_t bin) {
  if (bin == 0) throw ContractError("bin size must be positive");
  std::vector<CurvePoint> pts;
  for (std::size_t start = 0; start < log.size(); start += bin) {
    const std::size_t end = std::min(log.size(), start + bin);
    double sum = 0.0;
    std::size_t ok = 0;
    for (std::size_t i = start; i < end; ++i) {
      sum += log[i].sum_reward;
      ok += log[i].outcome == AgentStatus::reached_goal;
    }
    const double n = static_cast<double>(end - start);
    pts.push_back({end, sum / n, static_cast<double>(ok) / n});
  }
  return pts;
}

std::vector<CurveSeries> cmd_algo_compare(const RunConfig& config, const AlgoCompareOptions& options) {
  const auto worlds = load_world_specs(config);
  for (auto a : options.algorithms)
    if (a == Algorithm::ddqn && config.train.action_space != HeadKind::discrete)
      throw ConfigError("DDQN needs the discrete action space");
  const std::size_t bin = options.bin ? options.bin : std::max<std::size_t>(1, options.episode_cap / 50);
  const std::string hash = config_hash(config);
  std::vector<CurveSeries> series;
  for (auto algo : options.algorithms) {
    TrainConfig t = config.train;
    if (algo != t.algorithm) {
      t = TrainConfig::for_algorithm(algo);
      t.action_space = config.train.action_space;
      t.env_copies = config.train.env_copies;
      t.threads = config.train.threads;
    }
    for (std::size_t r = 0; r < options.repeats; ++r) {
      CurveSeries s;
      s.algorithm = algo;
      s.repeat = r;
      if (options.episode_cap > 0) {
        StopCriteria stop;
        stop.max_episodes = options.episode_cap;
        auto res = train_loop(worlds, config.sim, config.reward, t, derive_seed(config.seed, r), stop);
        const std::size_t n = std::min(res.log.size(), options.episode_cap);
        s.points = bin_curve(std::span(res.log).first(n), bin);
      }
      series.push_back(std::move(s));
    }
  }

  ensure_dir(config.output_dir);
  std::ofstream curves(config.output_dir / "curves.csv");
  if (!curves) throw Error("cannot write curves in " + config.output_dir.string());
  curves << "# config_hash=" << hash << '\n' << "algorithm,repeat,episode_end,mean_reward,success_rate\n";
  for (const auto& s : series)
    for (const auto& p : s.points)
      curves << to_string(s.algorithm) << ',' << s.repeat << ',' << p.episode_end << ',' << format_double(p.mean_reward)
             << ',' << format_double(p.success_rate) << '\n';

  std::ofstream summary(config.output_dir / "curves_summary.csv");
  if (!summary) throw Error("cannot write curve summary in " + config.output_dir.string());
  summary << "# config_hash=" << hash << '\n'
          << "algorithm,episode_end,repeats,reward_mean,reward_std,success_mean,success_std\n";
  for (auto algo : options.algorithms) {
    std::map<std::size_t, std::vector<const CurvePoint*>> by_end;
    for (const auto& s : series)
      if (s.algorithm == algo)
        for (const auto& p : s.points) by_end[p.episode_end].push_back(&p);
    for (const auto& [end, pts] : by_end) {
      const double n = static_cast<double>(pts.size());
      double mr = 0, ms = 0;
      for (auto* p : pts) {
        mr += p->mean_reward;
        ms += p->success_rate;
      }
      mr /= n;
      ms /= n;
      double vr = 0, vs = 0;
      for (auto* p : pts) {
        vr += (p->mean_reward - mr) * (p->mean_reward - mr);
        vs += (p->success_rate - ms) * (p->success_rate - ms);
      }
      summary << to_string(algo) << ',' << end << ',' << pts.size() << ',' << format_double(mr) << ','
              << format_double(std::sqrt(vr / n)) << ',' << format_double(ms) << ',' << format_double(std::sqrt(vs / n))
              << '\n';
    }
  }
  return series;
}

std::vector<WorldCheck> validate_world_files(std::span<const fs::path> files, double clearance) {
  std::vector<WorldCheck> out;
  for (const auto& f : files) {
    WorldCheck c;
    c.path = f;
    try {
      const auto map = load_world(f, clearance);
      c.ok = true;
      c.message = map.name + ": " + std::to_string(map.segments.size()) + " segments, " +
                  std::to_string(map.nodes.size()) + " nodes, " + std::to_string(map.recommended_agents) + " agents";
    } catch (const Error& e) {
      c.message = e.what();
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace mrnav
