#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mrnav/geometry.hpp"
#include "mrnav/rng.hpp"

namespace mrnav {

// One agent's assignment: indices into WorldMap::nodes.
struct ScenarioTask {
  std::size_t start = 0;
  std::size_t goal = 0;
  bool operator==(const ScenarioTask&) const = default;
};

// Static environment. Obstacles are closed polylines stored as a segment soup;
// free space is the even-odd interior of all segments (inside the outer
// boundary, outside every obstacle outline).
struct WorldMap {
  std::string name;
  std::vector<Segment> segments;
  std::vector<Vec2> nodes;
  std::size_t recommended_agents = 1;
  // Optional fixed assignments (scenario worlds such as swap or intersection).
  std::vector<ScenarioTask> tasks;
};

struct WorldBounds {
  Vec2 min;
  Vec2 max;
};

WorldBounds bounds(const WorldMap& map);

// Validates invariants; throws ValidationError on the first violation.
// `clearance` is the robot radius nodes must keep from walls and each other.
void validate_world(const WorldMap& map, double clearance = 0.25);

// Parses and validates a scenario file. Throws ParseError / ValidationError.
WorldMap load_world(const std::filesystem::path& path, double clearance = 0.25);
WorldMap parse_world(const std::string& text, double clearance = 0.25);
std::string serialize_world(const WorldMap& map);
void save_world(const WorldMap& map, const std::filesystem::path& path);

// Smallest positive hit distance in (0, max_range], or nullopt.
std::optional<double> ray_intersect(Vec2 origin, Vec2 direction, double max_range,
                                    const WorldMap& map);

// True iff the distance from center to some segment is < radius.
bool circle_overlaps_world(Vec2 center, double radius, const WorldMap& map);

// Distinct random start nodes, each goal different from its own start (and
// goals pairwise distinct whenever the node count allows it). Worlds with fixed
// tasks return their first n_agents tasks. Throws ContractError when there
// are not enough nodes.
std::vector<ScenarioTask> sample_tasks(const WorldMap& map, std::size_t n_agents, Rng& rng);

}  // namespace mrnav
