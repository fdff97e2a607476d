// mrnav command-line tool: train, eval, compare-astar, algo-compare, worlds.
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mrnav/error.hpp"
#include "mrnav/harness.hpp"

namespace fs = std::filesystem;
using namespace mrnav;

namespace {

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ','))
      if (!part.empty()) out.push_back(part);
  }
  return out;
}

ScenarioTask parse_task(const std::string& s) {
  ScenarioTask t;
  char comma = 0;
  std::istringstream in(s);
  if (!(in >> t.start >> comma >> t.goal) || comma != ',' || !in.eof())
    throw ConfigError("--task expects START,GOAL node indices, got '" + s + "'");
  return t;
}

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::vector<std::string> worlds;
  std::size_t agents = 0;
  std::size_t episodes = 0;
  std::size_t max_steps = 500;
  std::string out;
};

// Applies command-line overrides to a run configuration.
void override_config(RunConfig& c, const Common& o, CLI::App* cmd) {
  if (cmd->count("--seed")) c.seed = o.seed;
  if (cmd->count("--out")) c.output_dir = o.out;
  if (cmd->count("--max-steps")) c.sim.max_steps = o.max_steps;
  if (cmd->count("--episodes")) c.stop.max_episodes = o.episodes;
  if (!o.worlds.empty()) {
    c.worlds.clear();
    for (const auto& w : split_list(o.worlds)) c.worlds.push_back({w, 0, 0});
  }
  if (cmd->count("--agents"))
    for (auto& w : c.worlds) w.agents = o.agents;
  c.sim.validate();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-robot navigation: simulation, DRL training, evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", code_version());

  // train
  Common tr;
  std::size_t tr_updates = 0;
  std::size_t tr_threads = 0;
  auto* train = app.add_subcommand("train", "Train a shared policy from a run config");
  train->add_option("--config", tr.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", tr.seed, "Seed (overrides the config)");
  train->add_option("--world", tr.worlds, "Worlds to train on (overrides the config; comma list)");
  train->add_option("--agents", tr.agents, "Agents per world (overrides the config)");
  train->add_option("--episodes", tr.episodes, "Agent-episode budget");
  train->add_option("--updates", tr_updates, "Update budget");
  train->add_option("--max-steps", tr.max_steps, "Steps before timeout")->capture_default_str();
  train->add_option("--out", tr.out, "Output directory");
  train->add_option("--threads", tr_threads, "Worker threads (0: all cores)");

  // eval
  Common ev;
  ev.episodes = 10000;
  std::string ev_checkpoint, ev_policy = "network";
  std::size_t ev_threads = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate a policy and print a metric table");
  eval->add_option("--checkpoint", ev_checkpoint, "Checkpoint file")->check(CLI::ExistingFile);
  eval->add_option("--policy", ev_policy, "network | astar | straight | spin")->capture_default_str();
  eval->add_option("--world", ev.worlds, "World names or files (comma list)")->required();
  eval->add_option("--agents", ev.agents, "Agents per episode (default: world's recommended count)");
  eval->add_option("--episodes", ev.episodes, "Agent-episodes per world")->capture_default_str();
  eval->add_option("--max-steps", ev.max_steps, "Steps before timeout")->capture_default_str();
  eval->add_option("--seed", ev.seed, "Seed")->capture_default_str();
  eval->add_option("--config", ev.config, "Run config for sim and reward settings")->check(CLI::ExistingFile);
  eval->add_option("--out", ev.out, "Directory for report.txt and report.json");
  eval->add_option("--threads", ev_threads, "Worker threads (0: all cores)");

  // compare-astar
  Common ca;
  std::string ca_checkpoint, ca_policy = "network", ca_task;
  auto* cmp = app.add_subcommand("compare-astar", "Run one agent and export its path next to the A* path");
  cmp->add_option("--checkpoint", ca_checkpoint, "Checkpoint file")->check(CLI::ExistingFile);
  cmp->add_option("--policy", ca_policy, "network | astar | straight | spin")->capture_default_str();
  cmp->add_option("--world", ca.worlds, "World name or file")->required();
  cmp->add_option("--task", ca_task, "START,GOAL node indices");
  cmp->add_option("--max-steps", ca.max_steps, "Steps before timeout")->capture_default_str();
  cmp->add_option("--seed", ca.seed, "Seed")->capture_default_str();
  cmp->add_option("--config", ca.config, "Run config for sim and reward settings")->check(CLI::ExistingFile);
  cmp->add_option("--out", ca.out, "Output directory")->required();

  // algo-compare
  Common ac;
  std::vector<std::string> ac_algos{"ppo,a2c,ddqn"};
  std::size_t ac_repeats = 10, ac_bin = 0;
  ac.episodes = 25000;
  auto* algo = app.add_subcommand("algo-compare", "Train each algorithm repeatedly and export reward curves");
  algo->add_option("--config", ac.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  algo->add_option("--algorithms", ac_algos, "Comma list of ppo, a2c, ddqn")->capture_default_str();
  algo->add_option("--repeats", ac_repeats, "Runs per algorithm")->capture_default_str();
  algo->add_option("--episodes", ac.episodes, "Agent-episode cap per run")->capture_default_str();
  algo->add_option("--bin", ac_bin, "Episodes per curve point (0: cap/50)");
  algo->add_option("--seed", ac.seed, "Seed (overrides the config)");
  algo->add_option("--world", ac.worlds, "Worlds (overrides the config; comma list)");
  algo->add_option("--agents", ac.agents, "Agents per world (overrides the config)");
  algo->add_option("--max-steps", ac.max_steps, "Steps before timeout")->capture_default_str();
  algo->add_option("--out", ac.out, "Output directory");

  // worlds
  auto* worlds = app.add_subcommand("worlds", "Scenario file utilities");
  worlds->require_subcommand(1);
  std::vector<std::string> wv_files;
  auto* wvalidate = worlds->add_subcommand("validate", "Check scenario files (default: all bundled worlds)");
  wvalidate->add_option("files", wv_files, "Scenario files or bundled names");
  auto* wlist = worlds->add_subcommand("list", "List bundled worlds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*train) {
      RunConfig c = load_run_config(tr.config);
      override_config(c, tr, train);
      if (train->count("--updates")) c.stop.max_updates = tr_updates;
      if (train->count("--threads")) c.train.threads = tr_threads;
      TrainCallbacks progress;
      std::vector<EpisodeRecord> recent;
      progress.on_episode = [&](const EpisodeRecord& e) { recent.push_back(e); };
      progress.on_update = [&](std::size_t n, const PolicyNetwork<float>&, const UpdateStats& st) {
        if (n % 10 != 0) return;
        std::fprintf(stderr, "update %zu  episodes %zu  success(last %zu) %.3f  loss %.4f\n", n, recent.size(),
                     std::min<std::size_t>(recent.size(), c.stop.success_window),
                     success_rate(recent, c.stop.success_window), st.loss.total);
      };
      const auto s = cmd_train(c, progress);
      std::printf("trained %zu updates, %zu agent-episodes%s\nconfig hash %s\ncheckpoint %s\n", s.updates, s.episodes,
                  s.threshold_reached ? " (success threshold reached)" : "", s.config_hash.c_str(),
                  s.final_checkpoint.string().c_str());
    } else if (*eval) {
      EvalCommand cmd;
      cmd.policy = {ev_policy, ev_checkpoint};
      cmd.worlds = split_list(ev.worlds);
      cmd.agents = ev.agents;
      cmd.episodes = ev.episodes;
      cmd.max_steps = ev.max_steps;
      cmd.seed = ev.seed;
      cmd.out = ev.out;
      cmd.threads = ev_threads;
      if (!ev.config.empty()) cmd.config = load_run_config(ev.config);
      std::cout << format_report(cmd_eval(cmd));
    } else if (*cmp) {
      CompareCommand cmd;
      cmd.policy = {ca_policy, ca_checkpoint};
      const auto names = split_list(ca.worlds);
      if (names.size() != 1) throw ConfigError("compare-astar takes exactly one world");
      cmd.world = names.front();
      if (!ca_task.empty()) cmd.task = parse_task(ca_task);
      cmd.max_steps = ca.max_steps;
      cmd.seed = ca.seed;
      cmd.out = ca.out;
      if (!ca.config.empty()) cmd.config = load_run_config(ca.config);
      const auto r = cmd_compare_astar(cmd);
      std::printf("world %s  task %zu -> %zu  outcome %s after %zu steps\n", r.world.c_str(), r.task.start,
                  r.task.goal, std::string(to_string(r.outcome)).c_str(), r.steps);
      std::printf("travelled %.3f m (completed %.3f m)\n", r.travelled, r.completed_length());
      if (r.astar) std::printf("A* %.3f m  ratio %.3f\n", r.astar->length, r.ratio());
      else std::printf("A* found no path\n");
    } else if (*algo) {
      RunConfig c = load_run_config(ac.config);
      override_config(c, ac, algo);
      AlgoCompareOptions opt;
      opt.algorithms.clear();
      for (const auto& a : split_list(ac_algos)) opt.algorithms.push_back(parse_algorithm(a));
      opt.repeats = ac_repeats;
      opt.episode_cap = ac.episodes;
      opt.bin = ac_bin;
      const auto series = cmd_algo_compare(c, opt);
      std::printf("wrote %zu series to %s\n", series.size(), (c.output_dir / "curves.csv").string().c_str());
    } else if (*wvalidate) {
      std::vector<fs::path> files;
      if (wv_files.empty()) {
        for (const auto& e : fs::directory_iterator(worlds_dir()))
          if (e.path().extension() == ".json") files.push_back(e.path());
        std::sort(files.begin(), files.end());
      } else {
        for (const auto& f : wv_files) files.push_back(resolve_world(f));
      }
      bool all_ok = !files.empty();
      for (const auto& r : validate_world_files(files)) {
        std::printf("%s %s: %s\n", r.ok ? "ok  " : "FAIL", r.path.string().c_str(), r.message.c_str());
        all_ok = all_ok && r.ok;
      }
      return all_ok ? 0 : 1;
    } else if (*wlist) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(worlds_dir()))
        if (e.path().extension() == ".json") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) std::printf("%s\n", f.stem().string().c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return 1;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "invalid world: %s\n", e.what());
    return 1;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "shape mismatch: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
