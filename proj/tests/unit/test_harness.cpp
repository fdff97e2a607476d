#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "mrnav/error.hpp"
#include "mrnav/harness.hpp"

namespace fs = std::filesystem;
using namespace mrnav;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("mrnav_harness_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> lines(const fs::path& file) {
  std::ifstream in(file);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Few beams and short rollouts keep training tests quick.
RunConfig small_run(std::vector<WorldEntry> worlds, const fs::path& out) {
  RunConfig c;
  c.worlds = std::move(worlds);
  c.sim.lidar_beams = 61;
  c.train.env_copies = 2;
  c.train.rollout_length = 16;
  c.train.minibatch_size = 32;
  c.train.epochs = 1;
  c.train.threads = 1;
  c.seed = 3;
  c.output_dir = out;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MRNAV_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, UnknownKeyIsRejected) {
  const json j = {{"worlds", {"open_room"}}, {"learning_rat", 1}};
  EXPECT_THROW(parse_run_config(j), ConfigError);
  const json nested = {{"worlds", {"open_room"}}, {"train", {{"gama", 0.9}}}};
  EXPECT_THROW(parse_run_config(nested), ConfigError);
  EXPECT_THROW(parse_run_config(json{{"algorithm", "ppo"}}), ConfigError);
  EXPECT_THROW(parse_run_config(json{{"worlds", {"a"}}, {"algorithm", "sarsa"}}), ConfigError);
}

TEST(Config, PublishedDefaultsPerAlgorithm) {
  const auto ppo = parse_run_config(json{{"worlds", {"tube"}}});
  EXPECT_EQ(ppo.train.learning_rate, 3e-4);
  EXPECT_EQ(ppo.train.minibatch_size, 4096u);
  const auto dq = parse_run_config(json{{"worlds", {"tube"}}, {"algorithm", "ddqn"}});
  EXPECT_EQ(dq.train.learning_rate, 5e-5);
  EXPECT_EQ(dq.train.gamma, 0.95);
  EXPECT_EQ(dq.train.batch_size, 64u);
}

TEST(Config, HashIsStableAndIgnoresRunLocation) {
  const json j = {{"worlds", {"tube"}}, {"seed", 4}};
  auto a = parse_run_config(j);
  auto b = parse_run_config(j);
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.output_dir = "elsewhere";
  b.train.threads = 7;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 5;
  EXPECT_NE(config_hash(a), config_hash(b));
  // Canonical form parses back to the same hash.
  EXPECT_EQ(config_hash(parse_run_config(to_json(a))), config_hash(a));
}

TEST(Eval, StraightPolicyDownCorridorAlwaysArrives) {
  const WorldMap map = load_world(resolve_world("corridor"));
  SimConfig sim;
  sim.face_goal = true;
  EvalOptions o;
  o.episodes = 50;
  o.seed = 9;
  o.compute_astar = false;
  const auto row = evaluate(constant_controller({0.6, 0.0}), map, sim, RewardConfig{}, o);
  EXPECT_EQ(row.episodes, 50u);
  EXPECT_DOUBLE_EQ(row.reached_pct(), 100.0);
}

TEST(Eval, SpinningAlwaysTimesOut) {
  const WorldMap map = load_world(resolve_world("open_room"));
  EvalOptions o;
  o.episodes = 20;
  o.compute_astar = false;
  SimConfig sim;
  sim.max_steps = 40;
  const auto row = evaluate(constant_controller({0.0, 1.5}), map, sim, RewardConfig{}, o);
  EXPECT_DOUBLE_EQ(row.timeout_pct(), 100.0);
  EXPECT_DOUBLE_EQ(row.mean_steps, 40.0);
}

TEST(Eval, PercentagesPartitionAndSeedRepeats) {
  EvalCommand cmd;
  cmd.policy.kind = "astar";
  cmd.worlds = {"room"};
  cmd.episodes = 40;
  cmd.max_steps = 150;
  cmd.seed = 11;
  cmd.threads = 1;
  const auto a = cmd_eval(cmd);
  ASSERT_EQ(a.rows.size(), 1u);
  const auto& r = a.rows[0];
  EXPECT_EQ(r.agents, 5u);
  EXPECT_NEAR(r.reached_pct() + r.timeout_pct() + r.collision_pct(), 100.0, 0.01);
  cmd.threads = 2;
  const auto b = cmd_eval(cmd);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(Eval, WritesReportsWithHash) {
  const auto dir = scratch("eval");
  EvalCommand cmd;
  cmd.policy.kind = "straight";
  cmd.worlds = {"open_room"};
  cmd.episodes = 4;
  cmd.max_steps = 20;
  cmd.config = parse_run_config(json{{"worlds", {"open_room"}}});
  cmd.out = dir;
  const auto rep = cmd_eval(cmd);
  EXPECT_EQ(rep.config_hash, config_hash(*cmd.config));
  const auto j = json::parse(std::ifstream(dir / "report.json"));
  EXPECT_EQ(j["config_hash"], rep.config_hash);
  std::ifstream txt(dir / "report.txt");
  std::stringstream ss;
  ss << txt.rdbuf();
  EXPECT_NE(ss.str().find(rep.config_hash), std::string::npos);
}

TEST(Eval, NetworkPolicyNeedsCheckpoint) {
  EvalCommand cmd;
  cmd.worlds = {"open_room"};
  EXPECT_THROW(cmd_eval(cmd), ConfigError);
  cmd.policy.kind = "teleport";
  EXPECT_THROW(cmd_eval(cmd), ConfigError);
}

TEST(CompareAstar, FollowerTracksPlannerLength) {
  const auto dir = scratch("compare");
  CompareCommand cmd;
  cmd.policy.kind = "astar";
  cmd.world = "corridor";
  cmd.seed = 4;
  cmd.out = dir;
  const auto r = cmd_compare_astar(cmd);
  ASSERT_TRUE(r.astar);
  EXPECT_EQ(r.outcome, AgentStatus::reached_goal);
  EXPECT_GE(r.ratio(), 1.0 - 1e-9);
  EXPECT_LE(r.ratio(), 1.2);
  const auto overlay = lines(dir / "overlay.csv");
  ASSERT_GE(overlay.size(), 3u);
  EXPECT_EQ(overlay[0].rfind("# config_hash=", 0), 0u);
  EXPECT_EQ(overlay[1], "series,index,x,y");
  std::set<std::string> series;
  for (std::size_t i = 2; i < overlay.size(); ++i) series.insert(overlay[i].substr(0, overlay[i].find(',')));
  EXPECT_EQ(series, (std::set<std::string>{"agent", "astar"}));
  EXPECT_TRUE(fs::exists(dir / "compare.json"));
}

TEST(CompareAstar, SealedGoalHasNoPlan) {
  CompareCommand cmd;
  cmd.policy.kind = "spin";
  cmd.world = "sealed_goal";
  cmd.max_steps = 30;
  cmd.out = scratch("sealed");
  const auto r = cmd_compare_astar(cmd);
  EXPECT_FALSE(r.astar.has_value());
  EXPECT_EQ(r.outcome, AgentStatus::timed_out);
  const auto j = json::parse(std::ifstream(cmd.out / "compare.json"));
  EXPECT_TRUE(j["astar_length"].is_null());
}

TEST(CompareAstar, SameSeedSameTrail) {
  CompareCommand cmd;
  cmd.policy.kind = "astar";
  cmd.world = "four_rooms";
  cmd.seed = 21;
  cmd.max_steps = 200;
  cmd.out = scratch("trail_a");
  const auto a = cmd_compare_astar(cmd);
  cmd.out = scratch("trail_b");
  const auto b = cmd_compare_astar(cmd);
  ASSERT_EQ(a.trail.size(), b.trail.size());
  for (std::size_t i = 0; i < a.trail.size(); ++i) EXPECT_EQ(a.trail[i], b.trail[i]);
}

TEST(Train, ZeroEpisodesWritesManifestAndInitialCheckpoint) {
  const auto dir = scratch("train0");
  auto c = small_run({{"open_room", 1, 0}}, dir);
  c.stop.max_episodes = 0;
  const auto s = cmd_train(c);
  EXPECT_EQ(s.updates, 0u);
  EXPECT_EQ(s.episodes, 0u);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir / "checkpoints")) {
    EXPECT_EQ(e.path().filename(), "update_000000.bin");
    ++n;
  }
  EXPECT_EQ(n, 1u);
  const auto log = lines(dir / "learning_log.csv");
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[1], "episode,world,outcome,steps,sum_reward");
}

TEST(Train, SeveralWorldsAllAppearInLogAndOutputsCarryHash) {
  const auto dir = scratch("train3");
  auto c = small_run({{"tube", 0, 1}, {"room", 0, 1}, {"four_rooms", 0, 1}}, dir);
  c.sim.max_steps = 20;
  c.stop.max_updates = 2;
  const auto s = cmd_train(c);
  EXPECT_EQ(s.updates, 2u);
  std::set<std::string> worlds;
  const auto log = lines(dir / "learning_log.csv");
  EXPECT_EQ(log[0], "# config_hash=" + s.config_hash);
  for (std::size_t i = 2; i < log.size(); ++i) {
    const auto a = log[i].find(',');
    worlds.insert(log[i].substr(a + 1, log[i].find(',', a + 1) - a - 1));
  }
  EXPECT_EQ(worlds, (std::set<std::string>{"tube", "room", "four_rooms"}));
  const auto manifest = json::parse(std::ifstream(dir / "manifest.json"));
  EXPECT_EQ(manifest["config_hash"], s.config_hash);
  std::string meta;
  load_checkpoint(s.final_checkpoint, &meta);
  EXPECT_EQ(json::parse(meta)["config_hash"], s.config_hash);

  // The trained checkpoint evaluates on the simulator it was built for.
  EvalCommand ev;
  ev.policy = {"network", s.final_checkpoint};
  ev.worlds = {"tube"};
  ev.episodes = 2;
  ev.max_steps = 10;
  ev.config = c;
  const auto rep = cmd_eval(ev);
  EXPECT_EQ(rep.config_hash, s.config_hash);
  // And is refused on the default 1081-beam simulator.
  ev.config.reset();
  EXPECT_THROW(cmd_eval(ev), ShapeError);
}

TEST(AlgoCompare, ZeroCapWritesHeadersOnly) {
  const auto dir = scratch("algo0");
  auto c = small_run({{"open_room", 1, 0}}, dir);
  AlgoCompareOptions o;
  o.repeats = 1;
  o.episode_cap = 0;
  const auto series = cmd_algo_compare(c, o);
  EXPECT_EQ(series.size(), 3u);
  for (const auto& s : series) EXPECT_TRUE(s.points.empty());
  EXPECT_EQ(lines(dir / "curves.csv").size(), 2u);
}

TEST(AlgoCompare, OneSeriesPerAlgorithmAndRepeat) {
  const auto dir = scratch("algo");
  auto c = small_run({{"open_room", 1, 0}}, dir);
  c.sim.max_steps = 15;
  AlgoCompareOptions o;
  o.algorithms = {Algorithm::ppo, Algorithm::a2c};
  o.repeats = 2;
  o.episode_cap = 8;
  o.bin = 4;
  const auto series = cmd_algo_compare(c, o);
  ASSERT_EQ(series.size(), 4u);
  std::set<std::pair<int, std::size_t>> keys;
  for (const auto& s : series) {
    keys.insert({static_cast<int>(s.algorithm), s.repeat});
    EXPECT_EQ(s.points.size(), 2u);
  }
  EXPECT_EQ(keys.size(), 4u);
  EXPECT_EQ(lines(dir / "curves.csv").size(), 2u + 8u);
  EXPECT_TRUE(fs::exists(dir / "curves_summary.csv"));
}

TEST(AlgoCompare, BinCurve) {
  std::vector<EpisodeRecord> log(5);
  for (std::size_t i = 0; i < 5; ++i) {
    log[i].sum_reward = static_cast<double>(i);
    log[i].outcome = i % 2 ? AgentStatus::reached_goal : AgentStatus::timed_out;
  }
  const auto pts = bin_curve(log, 2);
  ASSERT_EQ(pts.size(), 3u);  // the trailing partial bin is kept
  EXPECT_EQ(pts[0].episode_end, 2u);
  EXPECT_DOUBLE_EQ(pts[0].mean_reward, 0.5);
  EXPECT_DOUBLE_EQ(pts[1].success_rate, 0.5);
  EXPECT_EQ(pts[2].episode_end, 5u);
  EXPECT_DOUBLE_EQ(pts[2].mean_reward, 4.0);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  EXPECT_EQ(run_cli("worlds validate"), 0);
  EXPECT_EQ(run_cli("eval --world open_room --policy straight --episodes 2 --max-steps 10"), 0);
  EXPECT_EQ(run_cli("eval --world open_room --bogus-flag"), 1);
  EXPECT_EQ(run_cli(""), 1);
  {
    std::ofstream(dir / "bad.json") << R"({"worlds": ["open_room"], "learning_rat": 1})";
  }
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.json").string()), 1);
  {
    std::ofstream(dir / "broken.json") << R"({"segments": [[0, 0, 1]]})";
  }
  EXPECT_EQ(run_cli("worlds validate " + (dir / "broken.json").string()), 1);
  {
    std::ofstream(dir / "missing.json") << R"({"worlds": ["no_such_world"]})";
  }
  EXPECT_EQ(run_cli("train --config " + (dir / "missing.json").string()), 1);
  // Output under /proc cannot be created: a runtime failure.
  {
    std::ofstream(dir / "unwritable.json") << R"({"worlds": ["open_room"], "output_dir": "/proc/mrnav_out"})";
  }
  EXPECT_EQ(run_cli("train --episodes 0 --config " + (dir / "unwritable.json").string()), 2);
}
