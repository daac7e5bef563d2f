#include <gtest/gtest.h>

#include "nrp/planners.hpp"
#include "test_util.hpp"

using namespace nrp;

namespace {

void expect_path_valid(const Path& p, const Config& qs, const Config& qg, const CSpace& s,
                       const SnakeModel& m, const OccupancyGrid& g) {
  ASSERT_GE(p.waypoints.size(), 1u);
  EXPECT_EQ(p.waypoints.front(), qs);
  EXPECT_EQ(p.waypoints.back(), qg);
  for (size_t i = 1; i < p.waypoints.size(); ++i)
    EXPECT_TRUE(edge_valid(s, m, g, p.waypoints[i - 1], p.waypoints[i], 0.05).valid);
  EXPECT_NEAR(p.length, path_length(s, p.waypoints), 1e-9);
}

void expect_tree_costs_consistent(const Tree& t, const CSpace& s) {
  for (int v = 0; v < t.size(); ++v) {
    if (t.parent[v] < 0) {
      EXPECT_DOUBLE_EQ(t.cost[v], 0.0);
    } else {
      EXPECT_NEAR(t.cost[v], t.cost[t.parent[v]] + distance(s, t.verts[t.parent[v]], t.verts[v]),
                  1e-9);
    }
  }
}

OccupancyGrid sealed_pocket_grid() {
  std::vector<std::string> rows(40, std::string(40, '.'));
  for (int i = 25; i < 40; ++i) rows[25][i] = '#';
  for (int i = 25; i < 40; ++i) rows[i][25] = '#';
  return testutil::grid_from_ascii(rows);
}

}  // namespace

TEST(PlannersRrt, SolvesOpenWorld) {
  auto g = testutil::free_grid(50, 50);
  SnakeModel m = testutil::point_model();
  CSpace s = testutil::space_2d(g);
  Config qs{0.5, 0.5}, qg{4.5, 4.2};
  PlanResult r = plan_rrt(g, m, s, qs, qg, {}, Budget::expansions(5000), 1);
  ASSERT_EQ(r.status, PlanStatus::Solved);
  expect_path_valid(*r.path, qs, qg, s, m, g);
  expect_tree_costs_consistent(r.tree, s);
  EXPECT_GT(r.solved_at, 0);
}

TEST(PlannersRrt, DegenerateQuerySolvesImmediately) {
  auto g = testutil::free_grid(20, 20);
  SnakeModel m = testutil::point_model();
  CSpace s = testutil::space_2d(g);
  Config q{1.0, 1.0};
  PlanResult r = plan_rrt(g, m, s, q, q, {}, Budget::expansions(10), 1);
  ASSERT_EQ(r.status, PlanStatus::Solved);
  EXPECT_DOUBLE_EQ(r.path->length, 0.0);
  EXPECT_EQ(r.expansions, 0);
}

TEST(PlannersRrt, InvalidQueriesThrow) {
  auto g = testutil::free_grid(20, 20);
  g.at(5, 5) = 1;
  SnakeModel m = testutil::point_model();
  CSpace s = testutil::space_2d(g);
  EXPECT_THROW(plan_rrt(g, m, s, Config{0.55, 0.55}, Config{1.5, 1.5}, {}, Budget::expansions(10), 1),
               std::invalid_argument);
  EXPECT_THROW(plan_rrt(g, m, s, Config{1.0, 1.0}, Config{5.0, 5.0}, {}, Budget::expansions(10), 1),
               std::invalid_argument);  // out of bounds
  EXPECT_THROW(plan_rrt(g, m, s, Config{1.0}, Config{1.5, 1.5}, {}, Budget::expansions(10), 1),
               std::invalid_argument);  // dimension mismatch
}

TEST(PlannersRrt, DeterministicPerSeed) {
  auto g = testutil::free_grid(40, 40);
  g.at(20, 20) = g.at(20, 21) = 1;
  SnakeModel m = testutil::point_model();
  CSpace s = testutil::space_2d(g);
  Config qs{0.5, 0.5}, qg{3.5, 3.5};
  PlanResult a = plan_rrt(g, m, s, qs, qg, {}, Budget::expansions(3000), 9);
  PlanResult b = plan_rrt(g, m, s, qs, qg, {}, Budget::expansions(3000), 9);
  EXPECT_EQ(a.tree.verts, b.tree.verts);
  EXPECT_EQ(a.tree.parent, b.tree.parent);
  EXPECT_EQ(a.solved_at, b.solved_at);
  PlanResult c = plan_rrt(g, m, s, qs, qg, {}, Budget::expansions(3000), 10);
  EXPECT_NE(a.tree.verts, c.tree.verts);
}

TEST(PlannersRrt, SealedGoalTimesOut) {
  OccupancyGrid g = sealed_pocket_grid();
  SnakeModel m = testutil::point_model();
  CSpace s = testutil::space_2d(g);
  Config qs{0.5, 0.5}, qg{3.5, 3.5};  // goal inside the sealed pocket
  PlanResult r = plan_rrt(g, m, s, qs, qg, {}, Budget::expansions(800), 3);
  EXPECT_EQ(r.status, PlanStatus::Timeout);
  EXPECT_FALSE(r.path.has_value());
  EXPECT_EQ(r.expansions, 800);
  PlanResult r2 = plan_rrt_is(g, m, s, qs, qg, {}, Budget::expansions(800), 3);
  EXPECT_EQ(r2.status, PlanStatus::Timeout);
}

TEST(PlannersRrt, TimeBudgetReturnsPromptly) {
  OccupancyGrid g = sealed_pocket_grid();
  SnakeModel m = testutil::point_model();
  CSpace s = testutil::space_2d(g);
  auto t0 = std::chrono::steady_clock::now();
  PlanResult r = plan_rrt(g, m, s, Config{0.5, 0.5}, Config{3.5, 3.5}, {}, Budget::time(0.05), 3);
  double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(r.status, PlanStatus::Timeout);
  EXPECT_LT(took, 1.0);
}

TEST(PlannersRrtIs, PlantsIntermediateVertices) {
  auto g = testutil::free_grid(60, 60);
  SnakeModel m = testutil::point_model();
  CSpace s = testutil::space_2d(g);
  Config qs{0.3, 0.3}, qg{5.5, 5.5};
  PlannerParams p;
  PlanResult is = plan_rrt_is(g, m, s, qs, qg, p, Budget::expansions(300), 4);
  PlanResult rrt = plan_rrt(g, m, s, qs, qg, p, Budget::expansions(300), 4);
  ASSERT_EQ(is.status, PlanStatus::Solved);
  ASSERT_EQ(rrt.status, PlanStatus::Solved);
  // every tree edge obeys the eta step bound
  for (int v = 1; v < is.tree.size(); ++v)
    EXPECT_LE(distance(s, is.tree.verts[v], is.tree.verts[is.tree.parent[v]]), p.eta + 1e-9);
  expect_tree_costs_consistent(is.tree, s);
  // an unobstructed expansion reaches the far corner in far fewer
  // expansions than single-step RRT needs
  EXPECT_LT(is.solved_at, rrt.solved_at);

  // in a sealed pocket neither planner terminates, so an equal expansion
  // budget isolates the vertex yield: the greedy extender plants a chain
  // of vertices per target where plain RRT plants at most one
  auto sealed = sealed_pocket_grid();
  CSpace s2 = testutil::space_2d(sealed);
  Config inside{1.0, 1.0};
  Config far_goal{double(sealed.width) * sealed.resolution - 0.4,
                  double(sealed.height) * sealed.resolution - 0.4};
  PlanResult is2 = plan_rrt_is(sealed, m, s2, inside, far_goal, p, Budget::expansions(200), 4);
  PlanResult rrt2 = plan_rrt(sealed, m, s2, inside, far_goal, p, Budget::expansions(200), 4);
  EXPECT_GT(is2.tree.size(), rrt2.tree.size());
}

TEST(PlannersInformed, SamplesStayInEllipsoid) {
  CSpace s;
  s.dims.push_back({DimKind::Linear, -5, 5, 1.0});
  s.dims.push_back({DimKind::Linear, -5, 5, 1.0});
  s.dims.push_back({DimKind::Angular, 0, 0, 0.5});
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    Config qs{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-kPi, kPi)};
    Config qg{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-kPi, kPi)};
    double c_min = distance(s, qs, qg);
    double c_best = c_min * rng.uniform(1.01, 1.6);
    for (int k = 0; k < 20; ++k) {
      Config q = informed_sample(s, qs, qg, c_best, rng);
      EXPECT_LE(distance(s, qs, q) + distance(s, q, qg), c_best + 1e-9);
      EXPECT_TRUE(within_bounds(s, q));
    }
  }
}

TEST(PlannersInformed, DegenerateBestEqualsMin) {
  CSpace s;
  s.dims.push_back({DimKind::Linear, -5, 5, 1.0});
  s.dims.push_back({DimKind::Linear, -5, 5, 1.0});
  Rng rng(56);
  Config qs{-1, 0}, qg{1, 0};
  Config q = informed_sample(s, qs, qg, distance(s, qs, qg), rng);
  // the ellipsoid degenerates to the segment between the endpoints
  EXPECT_NEAR(q[1], 0.0, 1e-6);
  EXPECT_NEAR(distance(s, qs, q) + distance(s, q, qg), 2.0, 1e-9);
}

TEST(PlannersIrrtStar, TraceNonIncreasingAndNearOptimal) {
  auto g = testutil::free_grid(50, 50);
  g.at(25, 25) = 1;
  SnakeModel m = testutil::point_model();
  CSpace s = testutil::space_2d(g);
  Config qs{0.5, 0.5}, qg{4.5, 4.5};
  PlanResult r = plan_irrt_star(g, m, s, qs, qg, {}, Budget::expansions(4000), 20);
  ASSERT_EQ(r.status, PlanStatus::Solved);
  expect_path_valid(*r.path, qs, qg, s, m, g);
  expect_tree_costs_consistent(r.tree, s);
  double last = kInf;
  for (auto& row : r.trace) {
    EXPECT_LE(row.best_cost, last + 1e-9);
    last = std::min(last, row.best_cost);
  }
  EXPECT_LE(r.path->length, 1.05 * distance(s, qs, qg));
}

TEST(PlannersIrrtStar, FreeWorldConvergesToStraightLine) {
  auto g = testutil::free_grid(50, 50);
  SnakeModel m = testutil::point_model();
  CSpace s = testutil::space_2d(g);
  Config qs{0.6, 0.7}, qg{4.3, 4.4};
  PlanResult r = plan_irrt_star(g, m, s, qs, qg, {}, Budget::time(5.0), 21);
  ASSERT_EQ(r.status, PlanStatus::Solved);
  EXPECT_LE(r.path->length, 1.02 * distance(s, qs, qg));
}

TEST(PlannersIrrtStar, DeterministicInExpansionMode) {
  auto g = testutil::free_grid(40, 40);
  g.at(18, 20) = g.at(19, 20) = g.at(20, 20) = 1;
  SnakeModel m = testutil::point_model();
  CSpace s = testutil::space_2d(g);
  Config qs{0.4, 0.4}, qg{3.6, 3.4};
  PlanResult a = plan_irrt_star(g, m, s, qs, qg, {}, Budget::expansions(1500), 31);
  PlanResult b = plan_irrt_star(g, m, s, qs, qg, {}, Budget::expansions(1500), 31);
  EXPECT_EQ(a.tree.verts, b.tree.verts);
  EXPECT_EQ(a.path->waypoints, b.path->waypoints);
  EXPECT_DOUBLE_EQ(a.path->length, b.path->length);
}

TEST(PlannersIrrtStar, SealedGoalStaysUnsolved) {
  OccupancyGrid g = sealed_pocket_grid();
  SnakeModel m = testutil::point_model();
  CSpace s = testutil::space_2d(g);
  PlanResult r =
      plan_irrt_star(g, m, s, Config{0.5, 0.5}, Config{3.5, 3.5}, {}, Budget::expansions(600), 5);
  EXPECT_EQ(r.status, PlanStatus::Timeout);
  EXPECT_FALSE(r.path.has_value());
}
