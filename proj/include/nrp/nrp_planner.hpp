#pragma once

#include <functional>

#include "nrp/planners.hpp"
#include "nrp/samplers.hpp"

namespace nrp {

// Waypoint provider for tree expansion. Inputs and output are
// window-relative; the planner owns the global/local transform, which is
// what keeps a learned sampler translation-invariant.
using WaypointSampler =
    std::function<Config(const LocalWindow&, const Config& qs_local, const Config& qg_local, Rng&)>;

struct NrpParams {
  double goal_bias = 0.5;  // discriminative default; generative runs use 0.4
  double sp_rate = 0.2;    // probability of a native shortest-path expansion
  double window = 4.0;     // meters
  double d_max = 3.0;      // sampler goal horizon: targets are steered this close
  double eta = 1.0;
  double edge_step = 0.05;
  double rewire_gamma = 6.0;
  int trace_stride = 50;
  int shortcut_attempts = 10;  // applied to each improved incumbent path
  bool single_vertex = false;  // ablation: keep only the first vertex per expansion

  void check() const {
    if (goal_bias < 0 || goal_bias > 1 || sp_rate < 0 || sp_rate > 1)
      throw std::invalid_argument("nrp: goal_bias and sp_rate must be probabilities");
    if (window <= 0 || d_max <= 0 || eta <= 0 || edge_step <= 0 || rewire_gamma <= 0)
      throw std::invalid_argument("nrp: window, d_max, eta, edge_step, rewire_gamma must be positive");
    if (trace_stride < 1 || shortcut_attempts < 0)
      throw std::invalid_argument("nrp: bad trace_stride or shortcut_attempts");
  }

  PlannerParams base() const { return {goal_bias, eta, edge_step, rewire_gamma, trace_stride}; }
};

// ---------------------------------------------------------------------
// Sampler adapters

inline WaypointSampler make_disc_sampler(const DiscModel& m, const OccupancyGrid& env,
                                         int n_cand = 32) {
  const OccupancyGrid* e = m.arch.global_conditioning ? &env : nullptr;
  return [&m, e, n_cand](const LocalWindow& w, const Config& qs, const Config& qg, Rng& rng) {
    return sample_discriminative(m, w, qs, qg, n_cand, rng, e);
  };
}

inline WaypointSampler make_gen_sampler(const GenModel& m, const OccupancyGrid& env) {
  const OccupancyGrid* e = m.arch.global_conditioning ? &env : nullptr;
  return [&m, e](const LocalWindow& w, const Config& qs, const Config& qg, Rng& rng) {
    return sample_generative(m, w, qs, qg, rng, e);
  };
}

// Ablation baseline: the same expansion machinery fed uniform waypoints.
inline WaypointSampler make_uniform_waypoint_sampler(const CSpace& space) {
  return [&space](const LocalWindow& w, const Config&, const Config&, Rng& rng) {
    Config q(space.size(), 0.0);
    q[0] = rng.uniform(w.patch.min_x() - w.center.x, w.patch.max_x() - w.center.x);
    q[1] = rng.uniform(w.patch.min_y() - w.center.y, w.patch.max_y() - w.center.y);
    for (int i = 2; i < space.size(); ++i) q[i] = rng.uniform(space.dims[i].lo, space.dims[i].hi);
    return q;
  };
}

namespace detail {

// Asks the sampler for a waypoint around q_cur and maps it to global
// coordinates, clamped into the window and the space bounds so expansion
// can never leave the local context. The target handed to the sampler is
// steered to within the training horizon first.
inline Config sampler_waypoint(const OccupancyGrid& grid, const CSpace& space,
                               const WaypointSampler& sampler, const Config& q_cur,
                               const Config& q_target, const NrpParams& p, Rng& rng) {
  LocalWindow w = extract_window(grid, {q_cur[0], q_cur[1]}, p.window);
  Config local_goal = steer(space, q_cur, q_target, p.d_max);
  Config qs_l = q_cur, qg_l = local_goal;
  qs_l[0] -= w.center.x;
  qs_l[1] -= w.center.y;
  qg_l[0] -= w.center.x;
  qg_l[1] -= w.center.y;
  Config q = sampler(w, qs_l, qg_l, rng);
  q[0] += w.center.x;
  q[1] += w.center.y;
  q[0] = std::clamp(q[0], w.patch.min_x(), w.patch.max_x());
  q[1] = std::clamp(q[1], w.patch.min_y(), w.patch.max_y());
  for (int i = 0; i < space.size(); ++i) q[i] = std::clamp(q[i], space.dims[i].lo, space.dims[i].hi);
  return q;
}

// Classic single-step RRT extension, used by the ablation flag.
inline std::vector<int> single_step(Tree& t, int cur, const Config& goal, const CSpace& space,
                                    const SnakeModel& model, const OccupancyGrid& grid, double eta,
                                    double edge_step) {
  Config next = steer(space, t.verts[cur], goal, eta);
  double d = distance(space, t.verts[cur], next);
  std::vector<int> added;
  if (d > 0.0 && edge_valid(space, model, grid, t.verts[cur], next, edge_step).valid)
    added.push_back(t.add(next, cur, d));
  return added;
}

}  // namespace detail

// One NRP expansion: greedy multi-vertex walk along the two-leg polyline
// q_cur -> q* -> q_target, stopping at the first blocked step. The corner
// q* becomes a vertex exactly when the first leg completes. Returns the
// added indices; an empty result just means the first step was blocked.
inline std::vector<int> expand_with_waypoint(Tree& t, int cur, const Config& q_target,
                                             const WaypointSampler& sampler,
                                             const OccupancyGrid& grid, const SnakeModel& model,
                                             const CSpace& space, const NrpParams& p, Rng& rng) {
  Config q_star = detail::sampler_waypoint(grid, space, sampler, t.verts[cur], q_target, p, rng);
  if (p.single_vertex) {
    const Config& goal = distance(space, t.verts[cur], q_star) > 0.0 ? q_star : q_target;
    return detail::single_step(t, cur, goal, space, model, grid, p.eta, p.edge_step);
  }
  std::vector<int> added;
  int corner = cur;
  bool reached = true;
  if (distance(space, t.verts[cur], q_star) > 0.0) {
    added = greedy_extend(t, cur, q_star, space, model, grid, p.eta, p.edge_step);
    reached = !added.empty() && t.verts[added.back()] == q_star;
    if (reached) corner = added.back();
  }
  if (reached && distance(space, t.verts[corner], q_target) > 0.0) {
    auto tail = greedy_extend(t, corner, q_target, space, model, grid, p.eta, p.edge_step);
    added.insert(added.end(), tail.begin(), tail.end());
  }
  return added;
}

// NRP: RRT-IS expansion machinery where most expansions route through a
// sampler-proposed waypoint; a fraction sp_rate keep the native straight
// extension, which preserves probabilistic completeness. sp_rate 0 and 1
// skip the gating coin entirely, so sp_rate = 1 replays RRT-IS's random
// stream bit for bit.
inline PlanResult plan_nrp(const OccupancyGrid& grid, const SnakeModel& model, const CSpace& space,
                           const WaypointSampler& sampler, const Config& qs, const Config& qg,
                           const NrpParams& p, const Budget& budget, uint64_t seed) {
  p.check();
  Rng rng(seed);
  return detail::feasible_plan_loop(
      grid, model, space, qs, qg, p.base(), budget, rng,
      [&](Tree& t, int near, const Config& target, Rng& r) {
        bool sp = p.sp_rate >= 1.0 || (p.sp_rate > 0.0 && r.coin(p.sp_rate));
        if (!sp) return expand_with_waypoint(t, near, target, sampler, grid, model, space, p, r);
        if (p.single_vertex)
          return detail::single_step(t, near, target, space, model, grid, p.eta, p.edge_step);
        return greedy_extend(t, near, target, space, model, grid, p.eta, p.edge_step);
      });
}

namespace detail {

// Greedy polyline walk for the rewiring planner: every planted vertex
// goes through RRT* choose-parent/rewire, and progress continues from the
// inserted vertex. Greedy progress still requires the direct step edge.
inline std::vector<int> star_walk(RewireTree& rt, int from, const std::vector<Config>& legs,
                                  const CSpace& space, const SnakeModel& model,
                                  const OccupancyGrid& grid, const PlannerParams& pp,
                                  bool single_vertex) {
  std::vector<int> added;
  int cur = from;
  for (const Config& leg : legs) {
    while (true) {
      if (distance(space, rt.t.verts[cur], leg) <= 0.0) break;
      Config next = steer(space, rt.t.verts[cur], leg, pp.eta);
      if (!edge_valid(space, model, grid, rt.t.verts[cur], next, pp.edge_step).valid) return added;
      int idx = rrt_star_insert(rt, next, cur, space, model, grid, pp);
      if (idx < 0) return added;  // duplicate vertex ends the walk
      added.push_back(idx);
      cur = idx;
      if (single_vertex) return added;
      if (rt.t.verts[cur] == leg) break;
    }
  }
  return added;
}

}  // namespace detail

// NRP*: waypoint expansions with choose-parent/rewire on every planted
// vertex, informed target sampling once a solution exists, and a
// shortcut pass over the incumbent path after each cost improvement.
// Anytime: runs to budget exhaustion; the returned path is the best
// incumbent, which always revalidates.
inline PlanResult plan_nrp_star(const OccupancyGrid& grid, const SnakeModel& model,
                                const CSpace& space, const WaypointSampler& sampler,
                                const Config& qs, const Config& qg, const NrpParams& p,
                                const Budget& budget, uint64_t seed) {
  p.check();
  detail::check_query(model, space, grid, qs, qg);
  Rng rng(seed);
  detail::PlanClock clock;
  PlanResult res;
  detail::RewireTree rt;
  rt.add(qs, -1, 0.0);
  PlannerParams pp = p.base();
  int goal_idx = -1;
  std::optional<Path> best_path;
  double best_len = kInf;
  double seen_goal_cost = kInf;  // tree goal cost at the last improvement
  double last_recorded = kInf;

  auto goal_cost = [&] { return goal_idx < 0 ? kInf : rt.t.cost[goal_idx]; };
  auto incumbent = [&] { return std::min(goal_cost(), best_len); };
  auto record = [&](bool force) {
    double c = incumbent();
    if (force || c < last_recorded) {
      res.trace.push_back({clock.elapsed(), res.expansions, c, rt.t.size()});
      last_recorded = std::min(last_recorded, c);
    }
  };
  // tighten the incumbent whenever the tree's route to the goal improves
  auto refresh_incumbent = [&] {
    if (goal_cost() >= seen_goal_cost - 1e-12) return;
    seen_goal_cost = goal_cost();
    Path tree_route = detail::tree_path(space, rt.t, goal_idx);
    Path tightened =
        shortcut(tree_route, grid, model, space, p.shortcut_attempts, rng, p.edge_step);
    const Path& better = tightened.length < tree_route.length ? tightened : tree_route;
    if (better.length < best_len) {
      best_len = better.length;
      best_path = better;
    }
    record(false);
  };

  if (distance(space, qs, qg) <= p.edge_step &&
      edge_valid(space, model, grid, qs, qg, p.edge_step).valid) {
    goal_idx = rt.add(qg, 0, distance(space, qs, qg));
    res.solved_at = 0;
    refresh_incumbent();
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
      target = informed_sample(space, qs, qg, incumbent(), rng);
    } else {
      target = sample_uniform(space, rng);
    }
    int near = detail::nearest_vertex(space, rt.t, target);
    bool sp = p.sp_rate >= 1.0 || (p.sp_rate > 0.0 && rng.coin(p.sp_rate));
    std::vector<Config> legs;
    if (sp) {
      legs = {target};
    } else {
      legs = {detail::sampler_waypoint(grid, space, sampler, rt.t.verts[near], target, p, rng),
              target};
    }
    auto added = detail::star_walk(rt, near, legs, space, model, grid, pp, p.single_vertex);
    if (goal_idx < 0) {
      for (int idx : added) {
        if (distance(space, rt.t.verts[idx], qg) <= p.edge_step &&
            edge_valid(space, model, grid, rt.t.verts[idx], qg, p.edge_step).valid) {
          goal_idx = rt.add(qg, idx, distance(space, rt.t.verts[idx], qg));
          res.solved_at = res.expansions;
          break;
        }
      }
    }
    refresh_incumbent();
    record(res.expansions % p.trace_stride == 0);
  }

  res.tree = rt.t;
  if (goal_idx >= 0) {
    res.status = PlanStatus::Solved;
    res.path = best_path ? *best_path : detail::tree_path(space, rt.t, goal_idx);
  }
  record(true);
  res.trace.back().tree_size = rt.t.size();
  return res;
}

}  // namespace nrp
