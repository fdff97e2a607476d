#include "mrnav/astar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <queue>

#include "mrnav/error.hpp"

namespace mrnav {

OccupancyGrid::OccupancyGrid(Vec2 origin, double resolution, int width, int height)
    : origin_(origin), resolution_(resolution), width_(width), height_(height) {
  if (!(resolution > 0.0)) throw ContractError("grid resolution must be positive");
  if (width < 1 || height < 1) throw ContractError("grid must have at least one cell");
  cells_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
}

Cell OccupancyGrid::cell_at(Vec2 p) const {
  return {static_cast<int>(std::floor((p.x - origin_.x) / resolution_)),
          static_cast<int>(std::floor((p.y - origin_.y) / resolution_))};
}

Vec2 OccupancyGrid::center(Cell c) const {
  return {origin_.x + (c.ix + 0.5) * resolution_, origin_.y + (c.iy + 0.5) * resolution_};
}

std::size_t OccupancyGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

namespace {

// Liang-Barsky test of a segment against a closed axis-aligned box.
bool segment_touches_box(const Segment& s, Vec2 lo, Vec2 hi) {
  double t0 = 0.0, t1 = 1.0;
  const Vec2 d = s.b - s.a;
  const double p[4] = {-d.x, d.x, -d.y, d.y};
  const double q[4] = {s.a.x - lo.x, hi.x - s.a.x, s.a.y - lo.y, hi.y - s.a.y};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
      continue;
    }
    const double t = q[i] / p[i];
    if (p[i] < 0.0) {
      t0 = std::max(t0, t);
    } else {
      t1 = std::min(t1, t);
    }
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

OccupancyGrid rasterize(const WorldMap& map, double resolution, double inflation) {
  if (!(resolution > 0.0)) throw ContractError("grid resolution must be positive");
  if (!(inflation >= 0.0)) throw ContractError("inflation must be non-negative");
  const WorldBounds b = bounds(map);
  const int w = std::max(1, static_cast<int>(std::ceil((b.max.x - b.min.x) / resolution - 1e-9)));
  const int h = std::max(1, static_cast<int>(std::ceil((b.max.y - b.min.y) / resolution - 1e-9)));
  OccupancyGrid grid(b.min, resolution, w, h);
  grid.inflation_ = inflation;
  // A hair wider than the cell so walls on a cell boundary block both sides.
  const double half = 0.5 * resolution * (1.0 + 1e-9);
  for (const auto& seg : map.segments) {
    const double pad = inflation + resolution;
    const Cell lo = grid.cell_at({std::min(seg.a.x, seg.b.x) - pad, std::min(seg.a.y, seg.b.y) - pad});
    const Cell hi = grid.cell_at({std::max(seg.a.x, seg.b.x) + pad, std::max(seg.a.y, seg.b.y) + pad});
    for (int iy = std::max(0, lo.iy); iy <= std::min(h - 1, hi.iy); ++iy) {
      for (int ix = std::max(0, lo.ix); ix <= std::min(w - 1, hi.ix); ++ix) {
        const Cell c{ix, iy};
        if (grid.occupied(c)) continue;
        const Vec2 m = grid.center(c);
        if (point_segment_distance(m, seg) <= inflation ||
            segment_touches_box(seg, {m.x - half, m.y - half}, {m.x + half, m.y + half}))
          grid.set(c, true);
      }
    }
  }
  return grid;
}

namespace {

constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};

struct Cost {
  std::uint32_t straight = 0;
  std::uint32_t diagonal = 0;
  double value() const { return grid_cost(straight, diagonal); }
};

std::optional<PlannedPath> search(const OccupancyGrid& grid, Cell start, Cell goal, bool use_heuristic) {
  if (grid.occupied(start)) throw ContractError("plan: start cell is occupied or outside the grid");
  if (grid.occupied(goal)) throw ContractError("plan: goal cell is occupied or outside the grid");
  const std::size_t n = static_cast<std::size_t>(grid.width()) * static_cast<std::size_t>(grid.height());
  constexpr auto kNone = std::numeric_limits<std::size_t>::max();
  std::vector<Cost> g(n);
  std::vector<std::uint8_t> seen(n, 0), closed(n, 0);
  std::vector<std::size_t> parent(n, kNone);
  auto heuristic = [&](Cell c) {
    return use_heuristic ? std::hypot(double(c.ix - goal.ix), double(c.iy - goal.iy)) : 0.0;
  };
  struct Entry {
    double f;
    double g;
    std::size_t idx;
    bool operator>(const Entry& o) const {
      if (f != o.f) return f > o.f;
      if (g != o.g) return g < o.g;  // prefer deeper nodes on ties
      return idx > o.idx;
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  const std::size_t s = grid.index(start), t = grid.index(goal);
  seen[s] = 1;
  open.push({heuristic(start), 0.0, s});
  const int w = grid.width();
  while (!open.empty()) {
    const Entry e = open.top();
    open.pop();
    if (closed[e.idx] || e.g != g[e.idx].value()) continue;
    closed[e.idx] = 1;
    if (e.idx == t) break;
    const Cell c{static_cast<int>(e.idx % w), static_cast<int>(e.idx / w)};
    for (int k = 0; k < 8; ++k) {
      const Cell nb{c.ix + kDx[k], c.iy + kDy[k]};
      if (grid.occupied(nb)) continue;
      const bool diag = k >= 4;
      if (diag && (grid.occupied({c.ix + kDx[k], c.iy}) || grid.occupied({c.ix, c.iy + kDy[k]}))) continue;
      const std::size_t ni = grid.index(nb);
      if (closed[ni]) continue;
      Cost cand = g[e.idx];
      (diag ? cand.diagonal : cand.straight) += 1;
      if (!seen[ni] || cand.value() < g[ni].value()) {
        seen[ni] = 1;
        g[ni] = cand;
        parent[ni] = e.idx;
        open.push({cand.value() + heuristic(nb), cand.value(), ni});
      }
    }
  }
  if (!closed[t]) return std::nullopt;

  PlannedPath path;
  for (std::size_t i = t; i != kNone; i = parent[i])
    path.cells.push_back({static_cast<int>(i % w), static_cast<int>(i / w)});
  std::reverse(path.cells.begin(), path.cells.end());
  path.straight_moves = g[t].straight;
  path.diagonal_moves = g[t].diagonal;
  path.length = g[t].value() * grid.resolution();
  for (std::size_t i = 0; i < path.cells.size(); ++i) {
    if (i > 0 && i + 1 < path.cells.size()) {
      const Cell& a = path.cells[i - 1];
      const Cell& b = path.cells[i];
      const Cell& c = path.cells[i + 1];
      if (b.ix - a.ix == c.ix - b.ix && b.iy - a.iy == c.iy - b.iy) continue;
    }
    path.waypoints.push_back(grid.center(path.cells[i]));
  }
  return path;
}

}  // namespace

std::optional<PlannedPath> plan(const OccupancyGrid& grid, Cell start, Cell goal) {
  return search(grid, start, goal, true);
}

std::optional<PlannedPath> plan(const OccupancyGrid& grid, Vec2 start, Vec2 goal) {
  auto path = plan(grid, grid.cell_at(start), grid.cell_at(goal));
  if (!path) return path;
  auto& w = path->waypoints;
  if (w.size() == 1) w.push_back(goal);
  w.front() = start;
  w.back() = goal;
  path->length = 0.0;
  for (std::size_t i = 1; i < w.size(); ++i) path->length += (w[i] - w[i - 1]).norm();
  return path;
}

std::optional<PlannedPath> plan_dijkstra(const OccupancyGrid& grid, Cell start, Cell goal) {
  return search(grid, start, goal, false);
}

// ---------------------------------------------------------------------------

Action pursue(const AgentState& state, Vec2 target, double cruise_speed) {
  const Vec2 d = target - state.position;
  const double dist = d.norm();
  if (dist < 1e-9) return {};
  const double err = wrap_angle(std::atan2(d.y, d.x) - state.heading);
  if (std::abs(err) > std::numbers::pi / 2) return {0.0, err > 0.0 ? kMaxAngular : -kMaxAngular};
  const double curvature = 2.0 * std::sin(err) / dist;
  // Slow down rather than leave the pursuit arc when the turn rate saturates.
  double v = cruise_speed;
  if (std::abs(curvature) * v > kMaxAngular) v = kMaxAngular / std::abs(curvature);
  return clamp_action({v, v * curvature});
}

PathFollower::PathFollower(std::vector<Vec2> path, FollowerConfig config)
    : path_(std::move(path)), config_(config) {
  if (path_.empty()) throw ContractError("cannot follow an empty path");
  cumulative_.push_back(0.0);
  for (std::size_t i = 1; i < path_.size(); ++i) cumulative_.push_back(cumulative_.back() + (path_[i] - path_[i - 1]).norm());
}

Vec2 PathFollower::point_at(double s) const {
  if (s <= 0.0) return path_.front();
  if (s >= cumulative_.back()) return path_.back();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  const std::size_t i = static_cast<std::size_t>(it - cumulative_.begin());
  const double seg = cumulative_[i] - cumulative_[i - 1];
  const double u = seg > 0.0 ? (s - cumulative_[i - 1]) / seg : 0.0;
  return path_[i - 1] + (path_[i] - path_[i - 1]) * u;
}

Action PathFollower::command(const AgentState& state) {
  if (path_.size() == 1) return pursue(state, path_.front(), config_.cruise_speed);
  // Project onto the path, searching a bounded window ahead of the current progress.
  const double horizon = progress_ + config_.lookahead + 1.0;
  double best_d = std::numeric_limits<double>::infinity();
  double best_s = progress_;
  for (std::size_t i = 1; i < path_.size(); ++i) {
    if (cumulative_[i] < progress_) continue;
    if (cumulative_[i - 1] > horizon) break;
    const Segment seg{path_[i - 1], path_[i]};
    const Vec2 ab = seg.b - seg.a;
    const double len2 = ab.squared_norm();
    double u = len2 > 0.0 ? dot(state.position - seg.a, ab) / len2 : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    const double s = cumulative_[i - 1] + u * (cumulative_[i] - cumulative_[i - 1]);
    const double d = (seg.a + ab * u - state.position).norm();
    if (s >= progress_ && d < best_d) {
      best_d = d;
      best_s = s;
    }
  }
  progress_ = std::max(progress_, best_s);
  return pursue(state, point_at(progress_ + config_.lookahead), config_.cruise_speed);
}

Action follow_path(const AgentState& state, const PlannedPath& path, FollowerConfig config) {
  PathFollower f(path.waypoints, config);
  return f.command(state);
}

void write_path_csv(const std::filesystem::path& file, std::span<const Vec2> points,
                    std::span<const std::string> header_comments) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  for (const auto& line : header_comments) out << "# " << line << '\n';
  out << "x,y\n";
  out.precision(17);
  for (const auto& p : points) out << p.x << ',' << p.y << '\n';
}

}  // namespace mrnav
