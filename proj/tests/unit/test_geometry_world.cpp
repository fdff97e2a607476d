#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "mrnav/error.hpp"
#include "mrnav/harness.hpp"
#include "mrnav/world.hpp"
#include "support/checks.hpp"

using namespace mrnav;

namespace {

WorldMap box_world(double w, double h) {
  WorldMap m;
  m.name = "box";
  m.segments = {{{0, 0}, {w, 0}}, {{w, 0}, {w, h}}, {{w, h}, {0, h}}, {{0, h}, {0, 0}}};
  m.nodes = {{1, 1}, {w - 1, h - 1}, {1, h - 1}};
  m.recommended_agents = 2;
  return m;
}

}  // namespace

TEST(Geometry, PointSegmentDistance) {
  const Segment s{{0, 0}, {2, 0}};
  EXPECT_DOUBLE_EQ(point_segment_distance({1, 1}, s), 1.0);
  EXPECT_DOUBLE_EQ(point_segment_distance({3, 0}, s), 1.0);
  EXPECT_DOUBLE_EQ(point_segment_distance({-3, 4}, s), 5.0);
}

TEST(Geometry, WrapAngle) {
  EXPECT_DOUBLE_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(wrap_angle(-std::numbers::pi), std::numbers::pi, 1e-15);
  EXPECT_NEAR(wrap_angle(3 * std::numbers::pi / 2), -std::numbers::pi / 2, 1e-15);
  EXPECT_NEAR(wrap_angle(0.1 + 8 * std::numbers::pi), 0.1, 1e-12);
}

TEST(Geometry, RayHitsMatchAnalyticOracle) {
  const auto r = checks::raycast_check(4000, 3);
  EXPECT_EQ(r.mismatches, 0u);
  EXPECT_GT(r.hits, 1000u);
  EXPECT_LT(r.max_error, 1e-9);
}

TEST(Geometry, RayParallelToSegmentMisses) {
  EXPECT_FALSE(ray_segment_hit({0, 0}, {1, 0}, {{1, 0}, {3, 0}}).has_value());
  EXPECT_FALSE(ray_segment_hit({0, 0}, {1, 0}, {{1, 1}, {3, 1}}).has_value());
}

TEST(Geometry, RayCircleFromInsideHitsFarSide) {
  const auto t = ray_circle_hit({0, 0}, {1, 0}, {0, 0}, 2.0);
  ASSERT_TRUE(t);
  EXPECT_DOUBLE_EQ(*t, 2.0);
}

TEST(World, RayIntersectReturnsNearestWithinRange) {
  const WorldMap m = box_world(10, 4);
  const auto t = ray_intersect({1, 2}, {1, 0}, 20.0, m);
  ASSERT_TRUE(t);
  EXPECT_DOUBLE_EQ(*t, 9.0);
  EXPECT_FALSE(ray_intersect({1, 2}, {1, 0}, 5.0, m).has_value());
}

TEST(World, CircleOverlap) {
  const WorldMap m = box_world(10, 4);
  EXPECT_FALSE(circle_overlaps_world({5, 2}, 0.25, m));
  EXPECT_TRUE(circle_overlaps_world({0.2, 2}, 0.25, m));
}

TEST(World, SerializeRoundTrip) {
  WorldMap m = box_world(6, 5);
  m.tasks = {{0, 1}, {1, 0}};
  const WorldMap back = parse_world(serialize_world(m));
  EXPECT_EQ(back.name, m.name);
  EXPECT_EQ(back.segments, m.segments);
  EXPECT_EQ(back.nodes, m.nodes);
  EXPECT_EQ(back.tasks, m.tasks);
  EXPECT_EQ(back.recommended_agents, m.recommended_agents);
}

TEST(World, ParseErrors) {
  EXPECT_THROW(parse_world("not json"), ParseError);
  EXPECT_THROW(parse_world("[]"), ParseError);
  EXPECT_THROW(parse_world(R"({"name":"x","segments":[],"nodes":[]})"), ParseError);
  EXPECT_THROW(parse_world(R"({"name":"x","recommended_agents":1,"segments":[[0,0,1]],"nodes":[]})"), ParseError);
}

TEST(World, ValidationErrors) {
  WorldMap m = box_world(6, 5);
  EXPECT_NO_THROW(validate_world(m));

  WorldMap wall_close = m;
  wall_close.nodes[0] = {0.1, 1};
  EXPECT_THROW(validate_world(wall_close), ValidationError);

  WorldMap outside = m;
  outside.nodes[0] = {-3, 1};
  EXPECT_THROW(validate_world(outside), ValidationError);

  WorldMap overlap = m;
  overlap.nodes[1] = {1.2, 1.1};
  EXPECT_THROW(validate_world(overlap), ValidationError);

  WorldMap too_many = m;
  too_many.recommended_agents = 9;
  EXPECT_THROW(validate_world(too_many), ValidationError);

  WorldMap bad_task = m;
  bad_task.tasks = {{0, 0}};
  EXPECT_THROW(validate_world(bad_task), ValidationError);

  WorldMap in_obstacle = m;
  const auto box = std::vector<Segment>{{{2, 2}, {4, 2}}, {{4, 2}, {4, 4}}, {{4, 4}, {2, 4}}, {{2, 4}, {2, 2}}};
  in_obstacle.segments.insert(in_obstacle.segments.end(), box.begin(), box.end());
  in_obstacle.nodes.push_back({3, 3});
  EXPECT_THROW(validate_world(in_obstacle), ValidationError);
}

TEST(World, SampleTasksDistinctStartsAndGoals) {
  const WorldMap m = load_world(resolve_world("hall"));
  Rng rng = make_rng(3);
  for (int k = 0; k < 50; ++k) {
    const auto tasks = sample_tasks(m, 16, rng);
    ASSERT_EQ(tasks.size(), 16u);
    std::set<std::size_t> starts, goals;
    for (const auto& t : tasks) {
      EXPECT_NE(t.start, t.goal);
      starts.insert(t.start);
      goals.insert(t.goal);
    }
    EXPECT_EQ(starts.size(), 16u);
    EXPECT_EQ(goals.size(), 16u);
  }
  EXPECT_THROW(sample_tasks(m, m.nodes.size() + 1, rng), ContractError);
}

TEST(World, FixedTasksAreUsedInOrder) {
  const WorldMap m = load_world(resolve_world("swap"));
  Rng rng = make_rng(1);
  const auto tasks = sample_tasks(m, 4, rng);
  ASSERT_EQ(tasks.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(tasks[i], m.tasks[i]);
}

TEST(World, BundledWorldsValidate) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(worlds_dir()))
    if (e.path().extension() == ".json") files.push_back(e.path());
  ASSERT_GE(files.size(), 10u);
  for (const auto& c : validate_world_files(files)) EXPECT_TRUE(c.ok) << c.path << ": " << c.message;
  for (const char* name : {"tube", "room", "four_rooms", "hall", "roblab", "swap", "intersection", "bottleneck",
                           "constriction", "multi"})
    EXPECT_NO_THROW(load_world(resolve_world(name))) << name;
}

TEST(World, PublishedAgentCountsFit) {
  const std::pair<const char*, std::size_t> counts[] = {
      {"tube", 2},   {"room", 5},          {"four_rooms", 12}, {"hall", 16},         {"roblab", 14},
      {"swap", 16},  {"intersection", 16}, {"bottleneck", 8},  {"constriction", 8}, {"multi", 24}};
  for (const auto& [name, n] : counts) {
    const WorldMap m = load_world(resolve_world(name));
    EXPECT_EQ(m.recommended_agents, n) << name;
    EXPECT_GE(m.nodes.size(), n) << name;
  }
}
