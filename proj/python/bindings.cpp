// Python bindings: worlds, reward, episodes, A*, and the harness commands.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mrnav/error.hpp"
#include "mrnav/harness.hpp"

namespace py = pybind11;
using namespace mrnav;
using nlohmann::json;

namespace {

// Round trip through text keeps the Python side on plain dicts.
py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::object& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

RunConfig config_from(const py::object& o) {
  if (py::isinstance<py::str>(o)) return load_run_config(o.cast<std::string>());
  return parse_run_config(from_py(o));
}

py::dict outcome_dict(const StepOutcome& o) {
  py::dict d;
  d["agent"] = o.agent;
  d["reward"] = o.reward;
  d["done"] = o.done;
  d["cause"] = o.cause ? py::cast(*o.cause) : py::none();
  d["lidar"] = o.next.latest().lidar.ranges;
  return d;
}

}  // namespace

PYBIND11_MODULE(_mrnav, m) {
  m.doc() = "Multi-robot navigation simulator, DRL trainer and A* baseline";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);

  py::class_<Vec2>(m, "Vec2")
      .def(py::init<>())
      .def(py::init<double, double>(), py::arg("x"), py::arg("y"))
      .def(py::init([](py::tuple t) { return Vec2{t[0].cast<double>(), t[1].cast<double>()}; }))
      .def_readwrite("x", &Vec2::x)
      .def_readwrite("y", &Vec2::y)
      .def("norm", &Vec2::norm)
      .def("__iter__", [](const Vec2& v) { return py::iter(py::make_tuple(v.x, v.y)); })
      .def("__eq__", [](const Vec2& a, const Vec2& b) { return a == b; })
      .def("__repr__", [](const Vec2& v) { return "Vec2(" + std::to_string(v.x) + ", " + std::to_string(v.y) + ")"; });
  py::implicitly_convertible<py::tuple, Vec2>();

  py::class_<Segment>(m, "Segment")
      .def(py::init<Vec2, Vec2>(), py::arg("a"), py::arg("b"))
      .def_readwrite("a", &Segment::a)
      .def_readwrite("b", &Segment::b)
      .def("length", &Segment::length);

  py::class_<ScenarioTask>(m, "ScenarioTask")
      .def(py::init<std::size_t, std::size_t>(), py::arg("start"), py::arg("goal"))
      .def_readwrite("start", &ScenarioTask::start)
      .def_readwrite("goal", &ScenarioTask::goal);

  py::class_<WorldMap, std::shared_ptr<WorldMap>>(m, "WorldMap")
      .def(py::init<>())
      .def_readwrite("name", &WorldMap::name)
      .def_readwrite("segments", &WorldMap::segments)
      .def_readwrite("nodes", &WorldMap::nodes)
      .def_readwrite("recommended_agents", &WorldMap::recommended_agents)
      .def_readwrite("tasks", &WorldMap::tasks);

  m.def("worlds_dir", &worlds_dir);
  m.def("resolve_world", [](const std::string& name) { return resolve_world(name); }, py::arg("name"));
  m.def(
      "load_world", [](const std::string& name, double clearance) { return load_world(resolve_world(name), clearance); },
      py::arg("name"), py::arg("clearance") = 0.25, "Loads a bundled world by name or a scenario file by path.");
  m.def("parse_world", &parse_world, py::arg("text"), py::arg("clearance") = 0.25);
  m.def("serialize_world", &serialize_world, py::arg("world"));
  m.def("validate_world", &validate_world, py::arg("world"), py::arg("clearance") = 0.25);

  // Reward
  py::enum_<TerminalCause>(m, "TerminalCause")
      .value("goal", TerminalCause::goal)
      .value("world_collision", TerminalCause::world_collision)
      .value("robot_collision", TerminalCause::robot_collision)
      .value("timeout", TerminalCause::timeout);

  py::class_<RewardConfig>(m, "RewardConfig")
      .def(py::init<>())
      .def_readwrite("goal_reward", &RewardConfig::goal_reward)
      .def_readwrite("c_world", &RewardConfig::c_world)
      .def_readwrite("c_robot", &RewardConfig::c_robot)
      .def_readwrite("d_pos", &RewardConfig::d_pos)
      .def_readwrite("d_neg", &RewardConfig::d_neg)
      .def_readwrite("alpha_pos", &RewardConfig::alpha_pos)
      .def_readwrite("alpha_neg", &RewardConfig::alpha_neg)
      .def_readwrite("l_pos", &RewardConfig::l_pos)
      .def_readwrite("l_neg", &RewardConfig::l_neg)
      .def_readwrite("omega_neg", &RewardConfig::omega_neg)
      .def("validate", &RewardConfig::validate);

  py::class_<RewardState>(m, "RewardState")
      .def_static("start", &RewardState::start, py::arg("initial_goal_distance"))
      .def_readonly("prev_goal_distance", &RewardState::prev_goal_distance)
      .def_readonly("shortest_distance", &RewardState::shortest_distance)
      .def_readonly("flip_sum", &RewardState::flip_sum);

  py::class_<TransitionFacts>(m, "TransitionFacts")
      .def(py::init<>())
      .def_readwrite("terminal", &TransitionFacts::terminal)
      .def_readwrite("prev_goal_distance", &TransitionFacts::prev_goal_distance)
      .def_readwrite("goal_distance", &TransitionFacts::goal_distance)
      .def_readwrite("heading", &TransitionFacts::heading)
      .def_readwrite("goal_vector", &TransitionFacts::goal_vector)
      .def_readwrite("min_laser", &TransitionFacts::min_laser)
      .def_readwrite("delta_omega", &TransitionFacts::delta_omega);

  m.def("compute_reward", &compute_reward, py::arg("facts"), py::arg("state"), py::arg("config") = RewardConfig{},
        py::arg("robot_radius") = 0.25, "Returns (reward, next_state).");

  // Simulation
  py::class_<Action>(m, "Action")
      .def(py::init<>())
      .def(py::init<double, double>(), py::arg("v_lin"), py::arg("v_ang"))
      .def_readwrite("v_lin", &Action::v_lin)
      .def_readwrite("v_ang", &Action::v_ang);

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_readwrite("dt", &SimConfig::dt)
      .def_readwrite("robot_radius", &SimConfig::robot_radius)
      .def_readwrite("goal_radius", &SimConfig::goal_radius)
      .def_readwrite("max_steps", &SimConfig::max_steps)
      .def_readwrite("lidar_beams", &SimConfig::lidar_beams)
      .def_readwrite("lidar_max_range", &SimConfig::lidar_max_range)
      .def_readwrite("noise_sigma", &SimConfig::noise_sigma)
      .def_readwrite("noise_enabled", &SimConfig::noise_enabled)
      .def_readwrite("face_goal", &SimConfig::face_goal)
      .def("validate", &SimConfig::validate);

  py::enum_<AgentStatus>(m, "AgentStatus")
      .value("active", AgentStatus::active)
      .value("reached_goal", AgentStatus::reached_goal)
      .value("collided_world", AgentStatus::collided_world)
      .value("collided_robot", AgentStatus::collided_robot)
      .value("timed_out", AgentStatus::timed_out);

  py::class_<AgentState>(m, "AgentState")
      .def(py::init<>())
      .def_readwrite("position", &AgentState::position)
      .def_readwrite("heading", &AgentState::heading)
      .def_readwrite("goal", &AgentState::goal)
      .def_readonly("status", &AgentState::status);

  m.def("integrate_pose", &integrate_pose, py::arg("state"), py::arg("action"), py::arg("dt") = 0.1);

  py::class_<Episode>(m, "Episode")
      .def(py::init([](const WorldMap& map, SimConfig sim, RewardConfig reward, std::uint64_t seed) {
             return Episode(std::make_shared<const WorldMap>(map), sim, reward, seed);
           }),
           py::arg("world"), py::arg("sim") = SimConfig{}, py::arg("reward") = RewardConfig{}, py::arg("seed") = 0)
      .def("reset", [](Episode& e, const std::vector<ScenarioTask>& t) { e.reset(t); }, py::arg("tasks"))
      .def("reset_random", &Episode::reset_random, py::arg("n_agents"))
      .def(
          "step",
          [](Episode& e, const std::vector<std::pair<std::size_t, Action>>& cmds) {
            std::vector<AgentCommand> c;
            for (const auto& [agent, a] : cmds) c.push_back({agent, a});
            py::list out;
            for (const auto& o : e.step(c)) out.append(outcome_dict(o));
            return out;
          },
          py::arg("commands"), "Commands are (agent, Action) pairs, one per active agent.")
      .def("agents", [](const Episode& e) { return std::vector<AgentState>(e.agents().begin(), e.agents().end()); })
      .def("active_agents", &Episode::active_agents)
      .def("done", &Episode::done)
      .def("step_count", &Episode::step_count)
      .def("trail", &Episode::trail, py::arg("agent"))
      .def("travelled", &Episode::travelled, py::arg("agent"));

  // A*
  m.def(
      "plan",
      [](const WorldMap& map, Vec2 start, Vec2 goal, double robot_radius, double resolution) -> py::object {
        const auto p = plan_in_world(map, start, goal, robot_radius, resolution);
        if (!p) return py::none();
        py::dict d;
        d["waypoints"] = p->waypoints;
        d["length"] = p->length;
        d["straight_moves"] = p->straight_moves;
        d["diagonal_moves"] = p->diagonal_moves;
        return d;
      },
      py::arg("world"), py::arg("start"), py::arg("goal"), py::arg("robot_radius") = 0.25,
      py::arg("resolution") = 0.1, "Shortest grid path in a world, or None when the goal is unreachable.");

  // Harness
  m.def("code_version", &code_version);
  m.def(
      "config_hash", [](const py::object& c) { return config_hash(config_from(c)); }, py::arg("config"),
      "Hash of a run config given as a dict or a file path.");
  m.def(
      "canonical_config", [](const py::object& c) { return to_py(to_json(config_from(c))); }, py::arg("config"));

  m.def(
      "train",
      [](const py::object& c, const std::optional<std::string>& out, std::optional<std::size_t> updates) {
        RunConfig cfg = config_from(c);
        if (out) cfg.output_dir = *out;
        if (updates) cfg.stop.max_updates = *updates;
        TrainSummary s;
        {
          py::gil_scoped_release release;
          s = cmd_train(cfg);
        }
        py::dict d;
        d["output_dir"] = s.output_dir.string();
        d["final_checkpoint"] = s.final_checkpoint.string();
        d["updates"] = s.updates;
        d["episodes"] = s.episodes;
        d["threshold_reached"] = s.threshold_reached;
        d["config_hash"] = s.config_hash;
        return d;
      },
      py::arg("config"), py::arg("out") = py::none(), py::arg("updates") = py::none());

  m.def(
      "evaluate",
      [](const std::vector<std::string>& worlds, const std::string& policy, const std::string& checkpoint,
         std::size_t episodes, std::size_t agents, std::size_t max_steps, std::uint64_t seed,
         const py::object& config) {
        EvalCommand cmd;
        cmd.policy = {policy, checkpoint};
        cmd.worlds = worlds;
        cmd.episodes = episodes;
        cmd.agents = agents;
        cmd.max_steps = max_steps;
        cmd.seed = seed;
        if (!config.is_none()) cmd.config = config_from(config);
        EvalReport r;
        {
          py::gil_scoped_release release;
          r = cmd_eval(cmd);
        }
        return to_py(to_json(r));
      },
      py::arg("worlds"), py::arg("policy") = "network", py::arg("checkpoint") = "", py::arg("episodes") = 10000,
      py::arg("agents") = 0, py::arg("max_steps") = 500, py::arg("seed") = 0, py::arg("config") = py::none());

  m.def(
      "compare_astar",
      [](const std::string& world, const std::string& out, const std::string& policy, const std::string& checkpoint,
         std::optional<ScenarioTask> task, std::size_t max_steps, std::uint64_t seed) {
        CompareCommand cmd;
        cmd.policy = {policy, checkpoint};
        cmd.world = world;
        cmd.task = task;
        cmd.max_steps = max_steps;
        cmd.seed = seed;
        cmd.out = out;
        const auto r = cmd_compare_astar(cmd);
        py::dict d;
        d["world"] = r.world;
        d["outcome"] = r.outcome;
        d["steps"] = r.steps;
        d["trail"] = r.trail;
        d["travelled"] = r.travelled;
        d["completed_length"] = r.completed_length();
        d["astar_length"] = r.astar ? py::cast(r.astar->length) : py::none();
        d["ratio"] = r.astar ? py::cast(r.ratio()) : py::none();
        return d;
      },
      py::arg("world"), py::arg("out"), py::arg("policy") = "network", py::arg("checkpoint") = "",
      py::arg("task") = py::none(), py::arg("max_steps") = 500, py::arg("seed") = 0);
}
