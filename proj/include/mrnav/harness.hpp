#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrnav/astar.hpp"
#include "mrnav/policy_net.hpp"
#include "mrnav/sim.hpp"
#include "mrnav/trainer.hpp"
#include "mrnav/world.hpp"

namespace mrnav {

// Directory of the bundled scenario files ($MRNAV_WORLDS_DIR overrides).
std::filesystem::path worlds_dir();

// A path to an existing file is used as is; otherwise `name` is looked up as
// <worlds_dir>/<name>.json, then relative to `base`.
std::filesystem::path resolve_world(const std::string& name, const std::filesystem::path& base = {});

// ---------------------------------------------------------------------------
// Run configuration (JSON, format documented in README)

struct WorldEntry {
  std::string file;
  std::size_t agents = 0;  // 0: the world's recommended count
  std::size_t copies = 0;  // 0: train.env_copies
};

struct RunConfig {
  std::vector<WorldEntry> worlds;
  TrainConfig train;
  RewardConfig reward;
  SimConfig sim;
  StopCriteria stop;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/default";
  std::size_t checkpoint_every = 0;  // updates; 0 keeps only the first and last
  std::filesystem::path base_dir;    // relative world paths resolve against this
};

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
// Canonical form: every field, defaults filled in.
nlohmann::json to_json(const RunConfig& c);
// 16 hex digits of FNV-1a over the canonical JSON text.
std::string config_hash(const RunConfig& c);

std::string code_version();

// Loads every world of the config and pairs it with its agent/copy counts.
std::vector<WorldSpec> load_world_specs(const RunConfig& c);

// ---------------------------------------------------------------------------
// Policies used for evaluation

// Drives all agents of one episode. A fresh controller is made per episode.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void reset(const Episode&) {}
  virtual std::vector<Action> act(const Episode& ep, std::span<const std::size_t> agents) = 0;
};

using ControllerFactory = std::function<std::unique_ptr<Controller>()>;

// Evaluation policy by name: "network" (needs a checkpoint), "astar",
// "straight" (0.6, 0) or "spin" (0, 1.5).
struct PolicySpec {
  std::string kind = "network";
  std::filesystem::path checkpoint;
};

// Loads the checkpoint for "network" and checks it against the simulator;
// stores the checkpoint's config hash when asked.
ControllerFactory make_controller(const PolicySpec& spec, const SimConfig& sim, std::string* config_hash = nullptr);

// Greedy action of a trained network (argmax / Gaussian mean).
ControllerFactory network_controller(std::shared_ptr<const PolicyNetwork<float>> net);
// Same command for every agent and step.
ControllerFactory constant_controller(Action a);
// A* path per agent followed by pure pursuit; agents without a path stand still.
ControllerFactory astar_controller(double resolution = 0.1, double margin = 0.05, FollowerConfig follower = {});

// Plans between two world points with inflation robot_radius + margin, falling
// back to robot_radius alone when an endpoint sits inside the wider band.
std::optional<PlannedPath> plan_in_world(const WorldMap& map, Vec2 start, Vec2 goal, double robot_radius,
                                         double resolution = 0.1, double margin = 0.05);

// ---------------------------------------------------------------------------
// Evaluation

struct EvalRow {
  std::string world;
  std::size_t agents = 0;
  std::size_t episodes = 0;  // agent-episodes
  std::size_t reached = 0, timed_out = 0, collided_world = 0, collided_robot = 0;
  double mean_steps = 0.0;
  // Over agent-episodes that reached the goal and had an A* path.
  std::size_t path_samples = 0;
  double mean_path_length = 0.0;
  double mean_astar_length = 0.0;

  double pct(std::size_t n) const { return episodes ? 100.0 * static_cast<double>(n) / static_cast<double>(episodes) : 0.0; }
  double reached_pct() const { return pct(reached); }
  double timeout_pct() const { return pct(timed_out); }
  double collision_pct() const { return pct(collided_world + collided_robot); }
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;
  std::string policy;
  std::string config_hash;
};

struct EvalOptions {
  std::string world;
  std::size_t agents = 0;       // 0: recommended
  std::size_t episodes = 1000;  // agent-episodes (rounded up to whole world episodes)
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  bool compute_astar = true;
};

// Runs ceil(episodes / agents) world episodes with seeds derived from `seed`.
EvalRow evaluate(const ControllerFactory& policy, const WorldMap& map, const SimConfig& sim,
                 const RewardConfig& reward, const EvalOptions& options);

std::string format_report(const EvalReport& r);
nlohmann::json to_json(const EvalReport& r);

// ---------------------------------------------------------------------------
// A* comparison

struct CompareResult {
  std::string world;
  ScenarioTask task;
  std::vector<Vec2> trail;
  double travelled = 0.0;
  AgentStatus outcome = AgentStatus::active;
  std::size_t steps = 0;
  std::optional<PlannedPath> astar;
  // Trail plus the straight remainder to the goal point; episodes end inside
  // the goal radius, so the raw trail is shorter than a planner's path.
  double completed_length() const;
  double ratio() const;
};

CompareResult compare_astar(const ControllerFactory& policy, std::shared_ptr<const WorldMap> map,
                            const ScenarioTask& task, const SimConfig& sim, const RewardConfig& reward,
                            std::uint64_t seed);

// overlay.csv (series,index,x,y) and compare.json.
void write_compare(const CompareResult& r, const std::filesystem::path& out_dir, const std::string& config_hash);

// ---------------------------------------------------------------------------
// Commands. Each writes into its output directory and returns a summary.

struct TrainSummary {
  std::filesystem::path output_dir;
  std::filesystem::path final_checkpoint;
  std::size_t updates = 0;
  std::size_t episodes = 0;
  bool threshold_reached = false;
  std::string config_hash;
};

// manifest.json, learning_log.csv and checkpoints/update_<n>.bin. `observer`
// callbacks run after the harness's own bookkeeping.
TrainSummary cmd_train(const RunConfig& config, const TrainCallbacks& observer = {});

struct EvalCommand {
  PolicySpec policy;
  std::vector<std::string> worlds;
  std::size_t agents = 0;
  std::size_t episodes = 10000;
  std::size_t max_steps = 500;
  std::uint64_t seed = 0;
  std::optional<RunConfig> config;  // sim and reward settings
  std::filesystem::path out;        // empty: no files
  std::size_t threads = 0;
};

// Loads the policy (ShapeError when the checkpoint does not fit the simulator),
// evaluates every world, writes report.txt and report.json.
EvalReport cmd_eval(const EvalCommand& cmd);

struct CompareCommand {
  PolicySpec policy;
  std::string world;
  std::optional<ScenarioTask> task;  // default: the world's first fixed task or a seeded sample
  std::size_t max_steps = 500;
  std::uint64_t seed = 0;
  std::optional<RunConfig> config;
  std::filesystem::path out;
};

CompareResult cmd_compare_astar(const CompareCommand& cmd);

struct AlgoCompareOptions {
  std::vector<Algorithm> algorithms{Algorithm::ppo, Algorithm::a2c, Algorithm::ddqn};
  std::size_t repeats = 10;
  std::size_t episode_cap = 25000;
  std::size_t bin = 0;  // episodes per curve point; 0: cap / 50 (at least 1)
};

struct CurvePoint {
  std::size_t episode_end = 0;
  double mean_reward = 0.0;
  double success_rate = 0.0;
};

struct CurveSeries {
  Algorithm algorithm = Algorithm::ppo;
  std::size_t repeat = 0;
  std::vector<CurvePoint> points;
};

// Bins a learning log into consecutive windows of `bin` episodes.
std::vector<CurvePoint> bin_curve(std::span<const EpisodeRecord> log, std::size_t bin);

// curves.csv (one series per algorithm and repeat) and curves_summary.csv
// (mean and std across repeats).
std::vector<CurveSeries> cmd_algo_compare(const RunConfig& config, const AlgoCompareOptions& options);

struct WorldCheck {
  std::filesystem::path path;
  bool ok = false;
  std::string message;
};

std::vector<WorldCheck> validate_world_files(std::span<const std::filesystem::path> files, double clearance = 0.25);

}  // namespace mrnav
