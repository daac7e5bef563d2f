#pragma once

#include <chrono>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nrp/roadmap.hpp"

namespace nrp {

struct Tree {
  std::vector<Config> verts;
  std::vector<int> parent;   // -1 at the root
  std::vector<double> cost;  // cost-to-come along tree edges

  int add(const Config& q, int par, double edge_cost) {
    verts.push_back(q);
    parent.push_back(par);
    cost.push_back(par < 0 ? 0.0 : cost[par] + edge_cost);
    return int(verts.size()) - 1;
  }
  int size() const { return int(verts.size()); }
};

struct PlannerParams {
  double goal_bias = 0.1;
  double eta = 1.0;
  double edge_step = 0.05;
  double rewire_gamma = 6.0;
  int trace_stride = 50;  // expansions between periodic trace rows
};

struct Budget {
  enum class Mode { Time, Expansions };
  Mode mode = Mode::Expansions;
  double seconds = 1.0;
  long max_expansions = 1000;

  static Budget time(double s) { return {Mode::Time, s, 0}; }
  static Budget expansions(long n) { return {Mode::Expansions, 0.0, n}; }
};

struct TraceRow {
  double wall_s = 0.0;
  long expansions = 0;
  double best_cost = kInf;
  int tree_size = 0;
};

enum class PlanStatus { Solved, Timeout };

struct PlanResult {
  PlanStatus status = PlanStatus::Timeout;
  std::optional<Path> path;
  std::vector<TraceRow> trace;
  Tree tree;
  long expansions = 0;
  long solved_at = -1;  // expansion count when first solved
};

namespace detail {

struct PlanClock {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

inline int nearest_vertex(const CSpace& s, const Tree& t, const Config& q) {
  int best = 0;
  double best_d = distance(s, t.verts[0], q);
  for (int i = 1; i < t.size(); ++i) {
    double d = distance(s, t.verts[i], q);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

inline void check_query(const SnakeModel& model, const CSpace& space, const OccupancyGrid& grid,
                        const Config& qs, const Config& qg) {
  if (qs.size() != size_t(space.size()) || qg.size() != size_t(space.size()))
    throw std::invalid_argument("plan: query dimension mismatch");
  if (!within_bounds(space, qs) || !within_bounds(space, qg))
    throw std::invalid_argument("plan: query out of bounds");
  if (in_collision(model, qs, grid) || in_collision(model, qg, grid))
    throw std::invalid_argument("plan: query endpoint in collision");
}

inline Path tree_path(const CSpace& space, const Tree& t, int goal_idx) {
  Path p;
  for (int v = goal_idx; v != -1; v = t.parent[v]) p.waypoints.push_back(t.verts[v]);
  std::reverse(p.waypoints.begin(), p.waypoints.end());
  if (p.waypoints.size() >= 2 && p.waypoints[0] == p.waypoints[1])
    p.waypoints.erase(p.waypoints.begin());
  p.length = path_length(space, p.waypoints);
  return p;
}

}  // namespace detail

// Walks the straight segment from `from` toward `target`, adding one tree
// vertex per eta of validated progress; stops at the first blocked leg.
// Returns the indices added (the target itself becomes the last vertex
// when fully reached).
inline std::vector<int> greedy_extend(Tree& t, int from, const Config& target, const CSpace& space,
                                      const SnakeModel& model, const OccupancyGrid& grid, double eta,
                                      double edge_step) {
  std::vector<int> added;
  int cur = from;
  while (true) {
    double d = distance(space, t.verts[cur], target);
    if (d <= 0.0) break;
    Config next = steer(space, t.verts[cur], target, eta);
    if (!edge_valid(space, model, grid, t.verts[cur], next, edge_step).valid) break;
    double step_len = distance(space, t.verts[cur], next);
    cur = t.add(next, cur, step_len);
    added.push_back(cur);
    if (next == target) break;
  }
  return added;
}

namespace detail {

// Shared harness for the feasible (stop at first solution) tree planners.
// `extend` performs one expansion toward the target and reports the
// vertices it added.
template <typename ExtendFn>
PlanResult feasible_plan_loop(const OccupancyGrid& grid, const SnakeModel& model, const CSpace& space,
                              const Config& qs, const Config& qg, const PlannerParams& p,
                              const Budget& budget, Rng& rng, ExtendFn&& extend) {
  check_query(model, space, grid, qs, qg);
  PlanClock clock;
  PlanResult res;
  res.tree.add(qs, -1, 0.0);

  auto finish = [&](int goal_idx) {
    res.status = PlanStatus::Solved;
    res.solved_at = res.expansions;
    res.path = tree_path(space, res.tree, goal_idx);
    res.trace.push_back({clock.elapsed(), res.expansions, res.path->length, res.tree.size()});
  };

  // degenerate query: the start already touches the goal
  if (distance(space, qs, qg) <= p.edge_step &&
      edge_valid(space, model, grid, qs, qg, p.edge_step).valid) {
    int g = res.tree.add(qg, 0, distance(space, qs, qg));
    finish(g);
    return res;
  }

  while (true) {
    if (budget.mode == Budget::Mode::Expansions) {
      if (res.expansions >= budget.max_expansions) break;
    } else {
      if (clock.elapsed() >= budget.seconds) break;
    }
    ++res.expansions;
    Config target = rng.coin(p.goal_bias) ? qg : sample_uniform(space, rng);
    int near = nearest_vertex(space, res.tree, target);
    std::vector<int> added = extend(res.tree, near, target, rng);
    bool solved = false;
    for (int idx : added) {
      if (distance(space, res.tree.verts[idx], qg) <= p.edge_step &&
          edge_valid(space, model, grid, res.tree.verts[idx], qg, p.edge_step).valid) {
        int g = res.tree.add(qg, idx, distance(space, res.tree.verts[idx], qg));
        finish(g);
        solved = true;
        break;
      }
    }
    if (solved) return res;
    if (res.expansions % p.trace_stride == 0)
      res.trace.push_back({clock.elapsed(), res.expansions, kInf, res.tree.size()});
  }
  res.trace.push_back({clock.elapsed(), res.expansions, kInf, res.tree.size()});
  return res;
}

}  // namespace detail

// Plain RRT: one steer-limited vertex per expansion.
inline PlanResult plan_rrt(const OccupancyGrid& grid, const SnakeModel& model, const CSpace& space,
                           const Config& qs, const Config& qg, const PlannerParams& p,
                           const Budget& budget, uint64_t seed) {
  Rng rng(seed);
  return detail::feasible_plan_loop(grid, model, space, qs, qg, p, budget, rng,
                                    [&](Tree& t, int near, const Config& target, Rng&) {
                                      std::vector<int> added;
                                      Config next = steer(space, t.verts[near], target, p.eta);
                                      double d = distance(space, t.verts[near], next);
                                      if (d > 0.0 &&
                                          edge_valid(space, model, grid, t.verts[near], next, p.edge_step)
                                              .valid)
                                        added.push_back(t.add(next, near, d));
                                      return added;
                                    });
}

// RRT with intermediate states: each expansion greedily walks all the way
// toward the target, planting a vertex every eta of valid progress.
inline PlanResult plan_rrt_is(const OccupancyGrid& grid, const SnakeModel& model, const CSpace& space,
                              const Config& qs, const Config& qg, const PlannerParams& p,
                              const Budget& budget, uint64_t seed) {
  Rng rng(seed);
  return detail::feasible_plan_loop(grid, model, space, qs, qg, p, budget, rng,
                                    [&](Tree& t, int near, const Config& target, Rng&) {
                                      return greedy_extend(t, near, target, space, model, grid, p.eta,
                                                           p.edge_step);
                                    });
}

// Uniform sample from the prolate-spheroid informed set {q : d(qs,q) +
// d(q,qg) <= c_best}. Points are drawn directly on the spheroid in
// weight-scaled coordinates (unit ball, axis scaling, Householder
// rotation onto the start-goal axis), then rejected only against the
// linear dimension bounds. Box rejection would stall here: as c_best
// approaches c_min the spheroid thins to a diagonal segment whose
// bounding box it fills with vanishing probability. Angular dimensions
// ride along unwrapped and are wrapped afterwards, so for them the set
// is a conservative superset; the exact metric has the final say.
inline Config informed_sample(const CSpace& space, const Config& qs, const Config& qg, double c_best,
                              Rng& rng) {
  int d = space.size();
  double c_min = distance(space, qs, qg);
  if (c_best < c_min) c_best = c_min;
  double a_t = c_best / 2.0;
  double a_c = std::sqrt(std::max(c_best * c_best - c_min * c_min, 0.0)) / 2.0;

  // weight-scaled endpoints; angular goal coordinates unwrapped so the
  // segment between them realizes the wrapped metric
  std::vector<double> xs(d), xg(d);
  for (int i = 0; i < d; ++i) {
    const Dim& dim = space.dims[i];
    double gi = dim.kind == DimKind::Angular ? qs[i] + angular_diff(qg[i], qs[i]) : qg[i];
    xs[i] = qs[i] * dim.weight;
    xg[i] = gi * dim.weight;
  }

  // when the spheroid's bounding box swallows the whole space anyway,
  // plain uniform sampling is the cheaper proposal (and covers c_best=inf)
  bool covers_bounds = true;
  if (std::isfinite(c_best)) {
    for (int i = 0; i < d && covers_bounds; ++i) {
      const Dim& dim = space.dims[i];
      if (dim.kind == DimKind::Angular) continue;
      double mid = (xs[i] + xg[i]) / 2.0 / dim.weight;
      double u = c_min > 0 ? (xg[i] - xs[i]) / c_min : 0.0;
      double half = std::sqrt(u * u * a_t * a_t + (1.0 - u * u) * a_c * a_c) / dim.weight;
      covers_bounds = mid - half <= dim.lo && mid + half >= dim.hi;
    }
  }

  std::vector<double> v(d, 0.0);  // Householder direction mapping e1 to the segment axis
  double vv = 0.0;
  if (c_min > 0) {
    for (int i = 0; i < d; ++i) v[i] = (xg[i] - xs[i]) / c_min;
    v[0] -= 1.0;
    for (int i = 0; i < d; ++i) vv += v[i] * v[i];
  }

  for (long attempt = 0; attempt < 1000000; ++attempt) {
    Config q(d);
    if (covers_bounds) {
      q = sample_uniform(space, rng);
    } else {
      // uniform point in the unit d-ball
      std::vector<double> z(d);
      double norm2 = 0.0;
      for (int i = 0; i < d; ++i) {
        z[i] = rng.normal();
        norm2 += z[i] * z[i];
      }
      if (norm2 <= 0.0) continue;
      double r = std::pow(rng.uniform(), 1.0 / d) / std::sqrt(norm2);
      for (int i = 0; i < d; ++i) z[i] *= r * (i == 0 ? a_t : a_c);
      if (vv > 1e-30) {
        double proj = 0.0;
        for (int i = 0; i < d; ++i) proj += v[i] * z[i];
        for (int i = 0; i < d; ++i) z[i] -= 2.0 * proj / vv * v[i];
      }
      bool ok = true;
      for (int i = 0; i < d && ok; ++i) {
        const Dim& dim = space.dims[i];
        q[i] = ((xs[i] + xg[i]) / 2.0 + z[i]) / dim.weight;
        if (dim.kind == DimKind::Angular) q[i] = wrap_angle(q[i]);
        else ok = q[i] >= dim.lo && q[i] <= dim.hi;
      }
      if (!ok) continue;
    }
    if (distance(space, qs, q) + distance(space, q, qg) <= c_best + 1e-12) return q;
  }
  throw std::logic_error("informed_sample: rejection failed to terminate (c_best=" +
                         std::to_string(c_best) + ", c_min=" + std::to_string(c_min) + ")");
}

namespace detail {

// Tree with child lists and subtree cost propagation, for the rewiring
// planners.
struct RewireTree {
  Tree t;
  std::vector<std::vector<int>> children;

  int add(const Config& q, int par, double edge_cost) {
    int idx = t.add(q, par, edge_cost);
    children.emplace_back();
    if (par >= 0) children[par].push_back(idx);
    return idx;
  }

  void reparent(int v, int new_parent, double new_cost) {
    int old = t.parent[v];
    if (old >= 0) std::erase(children[old], v);
    t.parent[v] = new_parent;
    children[new_parent].push_back(v);
    double delta = new_cost - t.cost[v];
    // shift the whole subtree
    std::vector<int> stack{v};
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      t.cost[u] += delta;
      for (int c : children[u]) stack.push_back(c);
    }
  }
};

struct RewireStep {
  std::vector<int> added;
  bool goal_improved = false;
};

// RRT* vertex insertion: choose the cheapest valid parent among the
// neighbors within the shrinking radius, then rewire neighbors through
// the new vertex. Returns the new index, or -1 if no parent validates.
inline int rrt_star_insert(RewireTree& rt, const Config& qnew, int near, const CSpace& space,
                           const SnakeModel& model, const OccupancyGrid& grid,
                           const PlannerParams& p) {
  double n = double(rt.t.size());
  double rr = std::min(p.eta, p.rewire_gamma * std::pow(std::log(std::max(n, 2.0)) / std::max(n, 2.0),
                                                        1.0 / space.size()));
  struct Cand {
    int idx;
    double d, potential;
  };
  std::vector<Cand> cands;
  for (int i = 0; i < rt.t.size(); ++i) {
    double d = distance(space, rt.t.verts[i], qnew);
    if (d == 0.0) return -1;  // duplicate vertex, nothing to add
    if (d <= rr || i == near) cands.push_back({i, d, rt.t.cost[i] + d});
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return a.potential != b.potential ? a.potential < b.potential : a.idx < b.idx;
  });
  int parent = -1;
  double parent_d = 0.0;
  for (auto& c : cands) {
    if (edge_valid(space, model, grid, rt.t.verts[c.idx], qnew, p.edge_step).valid) {
      parent = c.idx;
      parent_d = c.d;
      break;
    }
  }
  if (parent < 0) return -1;
  int idx = rt.add(qnew, parent, parent_d);
  for (auto& c : cands) {
    if (c.idx == parent) continue;
    double through = rt.t.cost[idx] + c.d;
    if (through < rt.t.cost[c.idx] - 1e-12 &&
        edge_valid(space, model, grid, qnew, rt.t.verts[c.idx], p.edge_step).valid)
      rt.reparent(c.idx, idx, through);
  }
  return idx;
}

}  // namespace detail

// Informed RRT*: asymptotically optimal rewiring plus ellipsoidal
// rejection sampling once a first solution bounds the useful region.
// Anytime: runs to budget exhaustion, recording every cost improvement.
inline PlanResult plan_irrt_star(const OccupancyGrid& grid, const SnakeModel& model,
                                 const CSpace& space, const Config& qs, const Config& qg,
                                 const PlannerParams& p, const Budget& budget, uint64_t seed) {
  detail::check_query(model, space, grid, qs, qg);
  Rng rng(seed);
  detail::PlanClock clock;
  PlanResult res;
  detail::RewireTree rt;
  rt.add(qs, -1, 0.0);
  int goal_idx = -1;
  double last_recorded = kInf;

  auto goal_cost = [&]() { return goal_idx < 0 ? kInf : rt.t.cost[goal_idx]; };
  auto record = [&](bool force) {
    double c = goal_cost();
    if (force || c < last_recorded) {
      res.trace.push_back({clock.elapsed(), res.expansions, c, rt.t.size()});
      last_recorded = std::min(last_recorded, c);
    }
  };

  // degenerate query
  if (distance(space, qs, qg) <= p.edge_step &&
      edge_valid(space, model, grid, qs, qg, p.edge_step).valid) {
    goal_idx = rt.add(qg, 0, distance(space, qs, qg));
    res.solved_at = 0;
    record(true);
  }

  while (true) {
    if (budget.mode == Budget::Mode::Expansions) {
      if (res.expansions >= budget.max_expansions) break;
    } else {
      if (clock.elapsed() >= budget.seconds) break;
    }
    ++res.expansions;
    Config target;
    if (rng.coin(p.goal_bias)) {
      target = qg;
    } else if (goal_idx >= 0) {
      target = informed_sample(space, qs, qg, goal_cost(), rng);
    } else {
      target = sample_uniform(space, rng);
    }
    int near = detail::nearest_vertex(space, rt.t, target);
    Config qnew = steer(space, rt.t.verts[near], target, p.eta);
    int idx = detail::rrt_star_insert(rt, qnew, near, space, model, grid, p);
    if (idx >= 0 && goal_idx < 0 && distance(space, qnew, qg) <= p.edge_step &&
        edge_valid(space, model, grid, qnew, qg, p.edge_step).valid) {
      goal_idx = rt.add(qg, idx, distance(space, qnew, qg));
      res.solved_at = res.expansions;
    }
    record(res.expansions % p.trace_stride == 0);
  }

  res.tree = rt.t;
  if (goal_idx >= 0) {
    res.status = PlanStatus::Solved;
    res.path = detail::tree_path(space, rt.t, goal_idx);
  }
  record(true);
  res.trace.back().tree_size = rt.t.size();
  return res;
}

}  // namespace nrp
