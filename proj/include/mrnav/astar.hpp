#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrnav/geometry.hpp"
#include "mrnav/sim.hpp"
#include "mrnav/world.hpp"

namespace mrnav {

struct Cell {
  int ix = 0;
  int iy = 0;
  bool operator==(const Cell&) const = default;
};

// Row-major occupancy over the world's bounding box.
class OccupancyGrid {
 public:
  OccupancyGrid(Vec2 origin, double resolution, int width, int height);

  Vec2 origin() const { return origin_; }
  double resolution() const { return resolution_; }
  int width() const { return width_; }
  int height() const { return height_; }
  double inflation() const { return inflation_; }

  bool inside(Cell c) const { return c.ix >= 0 && c.iy >= 0 && c.ix < width_ && c.iy < height_; }
  // Out-of-grid cells count as occupied.
  bool occupied(Cell c) const { return !inside(c) || cells_[index(c)] != 0; }
  void set(Cell c, bool occ) { cells_.at(index(c)) = occ ? 1 : 0; }
  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.iy) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(c.ix);
  }
  Cell cell_at(Vec2 p) const;
  Vec2 center(Cell c) const;
  std::size_t occupied_count() const;

 private:
  friend OccupancyGrid rasterize(const WorldMap&, double, double);
  Vec2 origin_;
  double resolution_;
  int width_, height_;
  double inflation_ = 0.0;
  std::vector<std::uint8_t> cells_;
};

// A cell is occupied when its center lies within `inflation` of a segment or a
// segment passes through the (closed) cell square. The second rule keeps thin
// walls solid at zero inflation; for inflation >= resolution/sqrt(2) it adds
// nothing.
OccupancyGrid rasterize(const WorldMap& map, double resolution = 0.1, double inflation = 0.3);

struct PlannedPath {
  std::vector<Vec2> waypoints;  // cell centers, collinear runs merged
  std::vector<Cell> cells;      // full 8-connected cell sequence
  std::size_t straight_moves = 0;
  std::size_t diagonal_moves = 0;
  double length = 0.0;  // meters
};

// Grid cost of a path in cells: straight + sqrt(2) * diagonal.
inline double grid_cost(std::size_t straight, std::size_t diagonal) {
  return static_cast<double>(straight) + static_cast<double>(diagonal) * 1.4142135623730951;
}

// 8-connected A* with Euclidean heuristic; diagonal steps require both
// adjacent cardinal cells to be free. Throws ContractError when start or goal
// is occupied; nullopt when unreachable. The point overload replaces the end
// cell centers by the exact start and goal and measures the polyline.
std::optional<PlannedPath> plan(const OccupancyGrid& grid, Vec2 start, Vec2 goal);
std::optional<PlannedPath> plan(const OccupancyGrid& grid, Cell start, Cell goal);

// Uniform-cost search on the same graph. Reference for tests.
std::optional<PlannedPath> plan_dijkstra(const OccupancyGrid& grid, Cell start, Cell goal);

struct FollowerConfig {
  double lookahead = 0.5;    // meters along the path
  double cruise_speed = kMaxLinear;
};

// Pure pursuit along a planned polyline. Progress along the path is monotone;
// the target is the path point one lookahead of arc length past the robot's
// projection. Turns in place when the target is behind.
class PathFollower {
 public:
  PathFollower(std::vector<Vec2> path, FollowerConfig config = {});
  Action command(const AgentState& state);
  double progress() const { return progress_; }
  double path_length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  Vec2 point_at(double s) const;

 private:
  std::vector<Vec2> path_;
  std::vector<double> cumulative_;
  FollowerConfig config_;
  double progress_ = 0.0;
};

// Stateless convenience: one command from a fresh follower.
Action follow_path(const AgentState& state, const PlannedPath& path, FollowerConfig config = {});

// Steering law toward a target point.
Action pursue(const AgentState& state, Vec2 target, double cruise_speed = kMaxLinear);

// CSV "x,y" waypoint export; each header line is written as "# <line>".
void write_path_csv(const std::filesystem::path& file, std::span<const Vec2> points,
                    std::span<const std::string> header_comments = {});

}  // namespace mrnav
