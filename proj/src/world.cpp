#include "mrnav/world.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mrnav/error.hpp"

namespace mrnav {

namespace {

using nlohmann::json;

// Directions used for the even-odd enclosure test. Irrational offsets keep the
// probe rays away from axis-aligned vertices.
constexpr int kParityProbes = 7;

int crossing_count(Vec2 origin, double angle, const WorldMap& map) {
  const Vec2 dir = unit_from_angle(angle);
  int count = 0;
  for (const auto& s : map.segments) {
    if (ray_segment_hit(origin, dir, s)) ++count;
  }
  return count;
}

std::string node_label(std::size_t i, Vec2 p) {
  std::ostringstream os;
  os << "node " << i << " (" << p.x << ", " << p.y << ")";
  return os.str();
}

double number(const json& j, const char* what) {
  if (!j.is_number()) throw ParseError(std::string("expected a number in ") + what);
  return j.get<double>();
}

}  // namespace

WorldBounds bounds(const WorldMap& map) {
  WorldBounds b{{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()},
                {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()}};
  auto grow = [&b](Vec2 p) {
    b.min = {std::min(b.min.x, p.x), std::min(b.min.y, p.y)};
    b.max = {std::max(b.max.x, p.x), std::max(b.max.y, p.y)};
  };
  for (const auto& s : map.segments) {
    grow(s.a);
    grow(s.b);
  }
  return b;
}

void validate_world(const WorldMap& map, double clearance) {
  if (map.name.empty()) throw ValidationError("world has no name");
  if (map.segments.empty()) throw ValidationError("world '" + map.name + "' has no segments");
  for (std::size_t i = 0; i < map.segments.size(); ++i) {
    const auto& s = map.segments[i];
    if (!s.a.finite() || !s.b.finite())
      throw ValidationError("segment " + std::to_string(i) + " has non-finite coordinates");
    if (s.a == s.b) throw ValidationError("segment " + std::to_string(i) + " is degenerate");
  }
  if (map.nodes.size() < 2) throw ValidationError("world '" + map.name + "' needs at least 2 nodes");
  if (map.recommended_agents < 1 || map.recommended_agents > map.nodes.size())
    throw ValidationError("recommended_agents must be in [1, node count]");

  for (std::size_t i = 0; i < map.nodes.size(); ++i) {
    const Vec2 p = map.nodes[i];
    if (!p.finite()) throw ValidationError(node_label(i, p) + " is not finite");
    for (const auto& s : map.segments) {
      if (point_segment_distance(p, s) < clearance)
        throw ValidationError(node_label(i, p) + " is closer than " + std::to_string(clearance) +
                              " m to a wall");
    }
    // Odd crossing count in every direction: inside the outer boundary and
    // outside all obstacles. Disagreeing parities mean an outline is not closed.
    const int first = crossing_count(p, 0.3183098861837907, map) % 2;
    for (int k = 1; k < kParityProbes; ++k) {
      const double angle = 0.3183098861837907 + k * 2.0 * std::numbers::pi / kParityProbes;
      if (crossing_count(p, angle, map) % 2 != first)
        throw ValidationError(node_label(i, p) + ": boundary is not closed around it");
    }
    if (first == 0)
      throw ValidationError(node_label(i, p) + " lies outside the boundary or inside an obstacle");
    for (std::size_t j = 0; j < i; ++j) {
      if ((map.nodes[j] - p).norm() < 2.0 * clearance)
        throw ValidationError(node_label(i, p) + " overlaps " + node_label(j, map.nodes[j]));
    }
  }

  std::vector<char> used_start(map.nodes.size(), 0);
  for (const auto& t : map.tasks) {
    if (t.start >= map.nodes.size() || t.goal >= map.nodes.size())
      throw ValidationError("task references a missing node");
    if (t.start == t.goal) throw ValidationError("task start equals goal");
    if (used_start[t.start]) throw ValidationError("two tasks share a start node");
    used_start[t.start] = 1;
  }
}

WorldMap parse_world(const std::string& text, double clearance) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scenario is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("scenario must be a JSON object");
  for (const char* key : {"name", "segments", "nodes", "recommended_agents"}) {
    if (!j.contains(key)) throw ParseError(std::string("scenario is missing '") + key + "'");
  }

  WorldMap map;
  if (!j["name"].is_string()) throw ParseError("'name' must be a string");
  map.name = j["name"].get<std::string>();
  if (!j["recommended_agents"].is_number_integer() || j["recommended_agents"].get<long long>() < 1)
    throw ParseError("'recommended_agents' must be a positive integer");
  map.recommended_agents = j["recommended_agents"].get<std::size_t>();

  if (!j["segments"].is_array()) throw ParseError("'segments' must be a list");
  for (const auto& s : j["segments"]) {
    if (!s.is_array() || s.size() != 4) throw ParseError("segment must be [x1, y1, x2, y2]");
    map.segments.push_back({{number(s[0], "segment"), number(s[1], "segment")},
                            {number(s[2], "segment"), number(s[3], "segment")}});
  }
  if (!j["nodes"].is_array()) throw ParseError("'nodes' must be a list");
  for (const auto& n : j["nodes"]) {
    if (!n.is_array() || n.size() != 2) throw ParseError("node must be [x, y]");
    map.nodes.push_back({number(n[0], "node"), number(n[1], "node")});
  }
  if (j.contains("tasks")) {
    if (!j["tasks"].is_array()) throw ParseError("'tasks' must be a list");
    for (const auto& t : j["tasks"]) {
      if (!t.is_array() || t.size() != 2 || !t[0].is_number_unsigned() || !t[1].is_number_unsigned())
        throw ParseError("task must be [start_node, goal_node]");
      map.tasks.push_back({t[0].get<std::size_t>(), t[1].get<std::size_t>()});
    }
  }
  validate_world(map, clearance);
  return map;
}

WorldMap load_world(const std::filesystem::path& path, double clearance) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_world(buf.str(), clearance);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string serialize_world(const WorldMap& map) {
  json j;
  j["name"] = map.name;
  j["recommended_agents"] = map.recommended_agents;
  j["segments"] = json::array();
  for (const auto& s : map.segments) j["segments"].push_back({s.a.x, s.a.y, s.b.x, s.b.y});
  j["nodes"] = json::array();
  for (const auto& n : map.nodes) j["nodes"].push_back({n.x, n.y});
  if (!map.tasks.empty()) {
    j["tasks"] = json::array();
    for (const auto& t : map.tasks) j["tasks"].push_back({t.start, t.goal});
  }
  return j.dump(1);
}

void save_world(const WorldMap& map, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize_world(map) << '\n';
}

std::optional<double> ray_intersect(Vec2 origin, Vec2 direction, double max_range,
                                    const WorldMap& map) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : map.segments) {
    if (auto t = ray_segment_hit(origin, direction, s); t && *t < best) best = *t;
  }
  if (best <= max_range) return best;
  return std::nullopt;
}

bool circle_overlaps_world(Vec2 center, double radius, const WorldMap& map) {
  return std::any_of(map.segments.begin(), map.segments.end(), [&](const Segment& s) {
    return point_segment_distance(center, s) < radius;
  });
}

std::vector<ScenarioTask> sample_tasks(const WorldMap& map, std::size_t n_agents, Rng& rng) {
  if (!map.tasks.empty()) {
    if (n_agents > map.tasks.size())
      throw ContractError("world '" + map.name + "' defines only " +
                          std::to_string(map.tasks.size()) + " tasks");
    return {map.tasks.begin(), map.tasks.begin() + static_cast<std::ptrdiff_t>(n_agents)};
  }
  const std::size_t m = map.nodes.size();
  if (n_agents > m || m < 2)
    throw ContractError("world '" + map.name + "' has " + std::to_string(m) + " nodes, cannot place " +
                        std::to_string(n_agents) + " agents");

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<ScenarioTask> tasks(n_agents);
  for (std::size_t i = 0; i < n_agents; ++i) tasks[i].start = order[i];

  for (int attempt = 0; attempt < 64; ++attempt) {
    std::shuffle(order.begin(), order.end(), rng);
    bool ok = true;
    for (std::size_t i = 0; i < n_agents && ok; ++i) ok = order[i] != tasks[i].start;
    if (ok) {
      for (std::size_t i = 0; i < n_agents; ++i) tasks[i].goal = order[i];
      return tasks;
    }
  }
  for (auto& t : tasks) {
    std::uniform_int_distribution<std::size_t> pick(0, m - 2);
    const std::size_t g = pick(rng);
    t.goal = g >= t.start ? g + 1 : g;
  }
  return tasks;
}

}  // namespace mrnav
