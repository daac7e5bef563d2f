#include <cmath>

#include <gtest/gtest.h>

#include "nrp/cspace.hpp"
#include "test_util.hpp"

using namespace nrp;

namespace {

CSpace mixed_space() {
  CSpace s;
  s.dims.push_back({DimKind::Linear, -2.0, 3.0, 1.0});
  s.dims.push_back({DimKind::Angular, 0, 0, 0.5});
  s.dims.push_back({DimKind::Linear, 0.0, 1.0, 2.0});
  s.dims.push_back({DimKind::Angular, 0, 0, 1.0});
  return s;
}

Config random_config(const CSpace& s, Rng& rng) {
  Config q(s.dims.size());
  for (size_t i = 0; i < s.dims.size(); ++i)
    q[i] = s.dims[i].kind == DimKind::Angular ? rng.uniform(-kPi, kPi)
                                              : rng.uniform(s.dims[i].lo, s.dims[i].hi);
  return q;
}

// exhaustive 2*pi shift: the wrapped distance is the minimum over
// unwrapping choices of the plain weighted Euclidean distance
double oracle_distance(const CSpace& s, const Config& a, const Config& b) {
  double sum = 0.0;
  for (size_t i = 0; i < s.dims.size(); ++i) {
    double d;
    if (s.dims[i].kind == DimKind::Angular) {
      d = std::abs(a[i] - b[i]);
      for (int k = -2; k <= 2; ++k) d = std::min(d, std::abs(a[i] - b[i] + k * 2.0 * kPi));
    } else {
      d = a[i] - b[i];
    }
    sum += s.dims[i].weight * s.dims[i].weight * d * d;
  }
  return std::sqrt(sum);
}

}  // namespace

TEST(CSpaceMetric, MatchesShiftOracle) {
  CSpace s = mixed_space();
  Rng rng(31);
  for (int t = 0; t < 500; ++t) {
    Config a = random_config(s, rng), b = random_config(s, rng);
    EXPECT_NEAR(distance(s, a, b), oracle_distance(s, a, b), 1e-12);
  }
}

TEST(CSpaceMetric, SymmetryIdentityTriangle) {
  CSpace s = mixed_space();
  Rng rng(32);
  for (int t = 0; t < 300; ++t) {
    Config a = random_config(s, rng), b = random_config(s, rng), c = random_config(s, rng);
    EXPECT_DOUBLE_EQ(distance(s, a, b), distance(s, b, a));
    EXPECT_DOUBLE_EQ(distance(s, a, a), 0.0);
    EXPECT_LE(distance(s, a, c), distance(s, a, b) + distance(s, b, c) + 1e-12);
  }
}

TEST(CSpaceMetric, WrapNeighborsAreClose) {
  CSpace s;
  s.dims.push_back({DimKind::Angular, 0, 0, 1.0});
  EXPECT_NEAR(distance(s, {-kPi + 0.05}, {kPi - 0.05}), 0.1, 1e-12);
}

TEST(CSpaceInterpolate, EndpointsExact) {
  CSpace s = mixed_space();
  Rng rng(33);
  for (int t = 0; t < 100; ++t) {
    Config a = random_config(s, rng), b = random_config(s, rng);
    EXPECT_EQ(interpolate(s, a, b, 0.0), a);
    EXPECT_EQ(interpolate(s, a, b, 1.0), b);
  }
}

TEST(CSpaceInterpolate, WrappedMidpoint) {
  CSpace s;
  s.dims.push_back({DimKind::Angular, 0, 0, 1.0});
  Config mid = interpolate(s, {-kPi + 0.1}, {kPi - 0.1}, 0.5);
  EXPECT_NEAR(mid[0], -kPi, 1e-12);  // the two ends meet at the seam
}

TEST(CSpaceInterpolate, MetricLinearity) {
  CSpace s = mixed_space();
  Rng rng(34);
  for (int t = 0; t < 200; ++t) {
    Config a = random_config(s, rng), b = random_config(s, rng);
    double d = distance(s, a, b);
    double t01 = rng.uniform();
    Config q = interpolate(s, a, b, t01);
    EXPECT_NEAR(distance(s, a, q), t01 * d, 1e-9);
    EXPECT_NEAR(distance(s, q, b), (1 - t01) * d, 1e-9);
  }
}

TEST(CSpaceSample, RespectsBoundsAndRegion) {
  CSpace s = mixed_space();
  Rng rng(35);
  for (int t = 0; t < 500; ++t) {
    Config q = sample_uniform(s, rng);
    EXPECT_TRUE(within_bounds(s, q));
  }
  Region r;
  r.lo = {-0.5, -1.0, 0.2, 0.0};
  r.hi = {0.5, 1.0, 0.4, 0.5};
  for (int t = 0; t < 500; ++t) {
    Config q = sample_uniform(s, rng, &r);
    for (size_t i = 0; i < q.size(); ++i) {
      EXPECT_GE(q[i], r.lo[i]);
      EXPECT_LE(q[i], r.hi[i]);
    }
  }
}

TEST(CSpaceSample, EmptyRegionThrows) {
  CSpace s = mixed_space();
  Rng rng(36);
  Region r;
  r.lo = {5.0, 0, 0, 0};  // beyond dim 0's upper bound
  r.hi = {6.0, 0, 0, 0};
  EXPECT_THROW(sample_uniform(s, rng, &r), std::invalid_argument);
}

TEST(CSpaceSample, DeterministicPerSeed) {
  CSpace s = mixed_space();
  Rng a(77), b(77), c(78);
  for (int t = 0; t < 50; ++t) {
    Config qa = sample_uniform(s, a), qb = sample_uniform(s, b);
    EXPECT_EQ(qa, qb);
  }
  EXPECT_NE(sample_uniform(s, a), sample_uniform(s, c));
}

TEST(CSpaceSteer, CapsAtEta) {
  CSpace s = mixed_space();
  Rng rng(37);
  for (int t = 0; t < 200; ++t) {
    Config a = random_config(s, rng), b = random_config(s, rng);
    double eta = rng.uniform(0.1, 2.0);
    Config q = steer(s, a, b, eta);
    double d = distance(s, a, b);
    if (d <= eta) {
      EXPECT_EQ(q, b);
    } else {
      EXPECT_NEAR(distance(s, a, q), eta, 1e-9);
    }
  }
}

TEST(CSpaceEdge, DetectsWallAndReportsFirstHit) {
  auto g = testutil::grid_from_ascii({
      "..........",
      "....#.....",
      "....#.....",
      "....#.....",
      "..........",
  });
  SnakeModel m = testutil::point_model();
  CSpace s = testutil::space_2d(g);
  Config a{0.15, 0.25}, b{0.85, 0.25};
  EdgeCheck ec = edge_valid(s, m, g, a, b, 0.01);
  EXPECT_FALSE(ec.valid);
  ASSERT_TRUE(ec.first_invalid_s.has_value());
  double x_hit = a[0] + *ec.first_invalid_s * (b[0] - a[0]);
  EXPECT_NEAR(x_hit, 0.4, 0.06);  // wall column starts at x = 0.4
  EXPECT_TRUE(edge_valid(s, m, g, Config{0.15, 0.45}, Config{0.85, 0.45}, 0.01).valid);
}

TEST(CSpaceEdge, ValidityBitIsSymmetric) {
  Rng rng(38);
  SnakeModel m = testutil::point_model();
  for (int t = 0; t < 200; ++t) {
    OccupancyGrid g = testutil::free_grid(20, 20);
    for (int k = 0; k < 12; ++k) g.cells[rng.index(g.cells.size())] = 1;
    CSpace s = testutil::space_2d(g);
    Config a{rng.uniform(0.05, 1.95), rng.uniform(0.05, 1.95)};
    Config b{rng.uniform(0.05, 1.95), rng.uniform(0.05, 1.95)};
    EXPECT_EQ(edge_valid(s, m, g, a, b, 0.07).valid, edge_valid(s, m, g, b, a, 0.07).valid);
  }
}

TEST(CSpaceEdge, CoarseHitImpliesFineHit) {
  Rng rng(39);
  SnakeModel m = testutil::point_model();
  int coarse_hits = 0;
  for (int t = 0; t < 1000; ++t) {
    OccupancyGrid g = testutil::free_grid(15, 15);
    for (int k = 0; k < 10; ++k) g.cells[rng.index(g.cells.size())] = 1;
    CSpace s = testutil::space_2d(g);
    Config a{rng.uniform(0.05, 1.45), rng.uniform(0.05, 1.45)};
    Config b{rng.uniform(0.05, 1.45), rng.uniform(0.05, 1.45)};
    auto coarse = edge_valid(s, m, g, a, b, 0.08);
    if (!coarse.valid) {
      ++coarse_hits;
      EXPECT_FALSE(edge_valid(s, m, g, a, b, 0.008).valid);
    }
  }
  EXPECT_GT(coarse_hits, 100);  // the trial set must actually exercise collisions
}

TEST(CSpaceEdge, ZeroLengthEdge) {
  auto g = testutil::free_grid(10, 10);
  SnakeModel m = testutil::point_model();
  CSpace s = testutil::space_2d(g);
  Config a{0.5, 0.5};
  EXPECT_TRUE(edge_valid(s, m, g, a, a, 0.05).valid);
  g.at(5, 5) = 1;
  EXPECT_FALSE(edge_valid(s, m, g, Config{0.55, 0.55}, Config{0.55, 0.55}, 0.05).valid);
}

TEST(CSpaceFactory, SnakeSpaceLayout) {
  SnakeModel m;
  auto g = testutil::free_grid(80, 80);
  CSpace s = make_snake_cspace(m, g);
  ASSERT_EQ(s.size(), 5);
  EXPECT_EQ(s.dims[0].kind, DimKind::Linear);
  EXPECT_DOUBLE_EQ(s.dims[0].lo, 0.0);
  EXPECT_DOUBLE_EQ(s.dims[0].hi, 8.0);
  EXPECT_DOUBLE_EQ(s.dims[0].weight, 1.0);
  EXPECT_DOUBLE_EQ(s.dims[2].weight, 0.5);
  EXPECT_DOUBLE_EQ(s.dims[2].lo, -2.6);
  EXPECT_DOUBLE_EQ(s.dims[2].hi, 2.6);
}
