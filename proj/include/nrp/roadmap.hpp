#pragma once

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "nrp/cspace.hpp"

namespace nrp {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Path {
  std::vector<Config> waypoints;
  double length = 0.0;
};

inline double path_length(const CSpace& s, const std::vector<Config>& wp) {
  double len = 0.0;
  for (size_t i = 1; i < wp.size(); ++i) len += distance(s, wp[i - 1], wp[i]);
  return len;
}

struct Roadmap {
  std::vector<Config> nodes;
  std::vector<std::vector<std::pair<int, double>>> adj;  // (neighbor, weight)
  double gamma = 6.0;
  double radius = 0.0;  // connection radius used at construction
};

// PRM* connection radius, shrinking as the node set densifies.
inline double prm_star_radius(double gamma, int n, int dim) {
  if (n < 2) return 0.0;
  return gamma * std::pow(std::log(double(n)) / double(n), 1.0 / dim);
}

struct DijkstraResult {
  std::vector<double> dist;
  std::vector<int> parent;
};

inline DijkstraResult dijkstra(const std::vector<std::vector<std::pair<int, double>>>& adj, int src) {
  DijkstraResult r;
  r.dist.assign(adj.size(), kInf);
  r.parent.assign(adj.size(), -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
  r.dist[src] = 0.0;
  pq.emplace(0.0, src);
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > r.dist[u]) continue;
    for (auto& [v, w] : adj[u]) {
      double nd = d + w;
      if (nd < r.dist[v]) {
        r.dist[v] = nd;
        r.parent[v] = u;
        pq.emplace(nd, v);
      }
    }
  }
  return r;
}

struct PrmParams {
  double gamma = 6.0;
  double edge_step = 0.05;
  OutsideRule rule = OutsideRule::Occupied;
  const Region* region = nullptr;  // optional sampling restriction
};

// PRM*: n collision-free uniform nodes, every pair within the shrinking
// radius connected iff the straight edge validates.
inline Roadmap build_prm_star(const OccupancyGrid& grid, const SnakeModel& model, const CSpace& space,
                              int n, Rng& rng, const PrmParams& p = {}) {
  Roadmap rm;
  rm.gamma = p.gamma;
  rm.nodes.reserve(n);
  long attempts = 0, cap = 1000L * std::max(n, 1);
  while (int(rm.nodes.size()) < n) {
    if (++attempts > cap)
      throw std::runtime_error("build_prm_star: sampling exhausted after " + std::to_string(cap) +
                               " rejections");
    Config q = sample_uniform(space, rng, p.region);
    if (!in_collision(model, q, grid, p.rule)) rm.nodes.push_back(std::move(q));
  }
  rm.radius = prm_star_radius(p.gamma, n, space.size());
  rm.adj.assign(n, {});
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double d = distance(space, rm.nodes[i], rm.nodes[j]);
      if (d > rm.radius) continue;
      if (!edge_valid(space, model, grid, rm.nodes[i], rm.nodes[j], p.edge_step, p.rule).valid) continue;
      rm.adj[i].emplace_back(j, d);
      rm.adj[j].emplace_back(i, d);
    }
  }
  return rm;
}

// Valid connections from a free-floating config to roadmap nodes within
// the insertion radius r(n+2); used for query points and tree vertices.
inline std::vector<std::pair<int, double>> connect_point(const Roadmap& rm, const Config& q,
                                                         const OccupancyGrid& grid,
                                                         const SnakeModel& model, const CSpace& space,
                                                         double edge_step,
                                                         OutsideRule rule = OutsideRule::Occupied) {
  double r = prm_star_radius(rm.gamma, int(rm.nodes.size()) + 2, space.size());
  std::vector<std::pair<int, double>> out;
  for (int i = 0; i < int(rm.nodes.size()); ++i) {
    double d = distance(space, q, rm.nodes[i]);
    if (d > r) continue;
    if (!edge_valid(space, model, grid, q, rm.nodes[i], edge_step, rule).valid) continue;
    out.emplace_back(i, d);
  }
  return out;
}

// Shortest roadmap path between two free configs, both temporarily
// inserted with edges to nearby roadmap nodes (never to each other; any
// direct connection must be rediscovered through the roadmap).
inline std::optional<Path> shortest_path(const Roadmap& rm, const Config& a, const Config& b,
                                         const OccupancyGrid& grid, const SnakeModel& model,
                                         const CSpace& space, double edge_step = 0.05,
                                         OutsideRule rule = OutsideRule::Occupied) {
  if (in_collision(model, a, grid, rule) || in_collision(model, b, grid, rule)) return std::nullopt;
  if (a == b) return Path{{a}, 0.0};
  int n = int(rm.nodes.size());
  auto adj = rm.adj;
  adj.resize(n + 2);
  int ia = n, ib = n + 1;
  for (auto& [v, w] : connect_point(rm, a, grid, model, space, edge_step, rule)) {
    adj[ia].emplace_back(v, w);
    adj[v].emplace_back(ia, w);
  }
  for (auto& [v, w] : connect_point(rm, b, grid, model, space, edge_step, rule)) {
    adj[ib].emplace_back(v, w);
    adj[v].emplace_back(ib, w);
  }
  auto res = dijkstra(adj, ia);
  if (res.dist[ib] == kInf) return std::nullopt;
  Path path;
  path.length = res.dist[ib];
  for (int v = ib; v != -1; v = res.parent[v])
    path.waypoints.push_back(v == ia ? a : (v == ib ? b : rm.nodes[v]));
  std::reverse(path.waypoints.begin(), path.waypoints.end());
  return path;
}

// Random two-point path shortening: pick two points along the path (by
// arc length), replace the stretch between them with a straight segment
// whenever that validates and is shorter. Never increases length.
inline Path shortcut(const Path& path, const OccupancyGrid& grid, const SnakeModel& model,
                     const CSpace& space, int attempts, Rng& rng, double edge_step = 0.05,
                     OutsideRule rule = OutsideRule::Occupied) {
  Path cur = path;
  if (cur.waypoints.size() < 2) return cur;
  for (int it = 0; it < attempts; ++it) {
    std::vector<double> cum(cur.waypoints.size(), 0.0);
    for (size_t i = 1; i < cur.waypoints.size(); ++i)
      cum[i] = cum[i - 1] + distance(space, cur.waypoints[i - 1], cur.waypoints[i]);
    double total = cum.back();
    if (total <= 0.0) break;
    double u1 = rng.uniform(0.0, total), u2 = rng.uniform(0.0, total);
    double s1 = std::min(u1, u2), s2 = std::max(u1, u2);
    if (s2 - s1 < 1e-9) continue;
    auto locate = [&](double s) {
      size_t i = size_t(std::upper_bound(cum.begin(), cum.end(), s) - cum.begin());
      i = std::min(std::max(i, size_t(1)), cum.size() - 1) - 1;
      double seg = cum[i + 1] - cum[i];
      double t = seg > 0 ? (s - cum[i]) / seg : 0.0;
      return std::pair<size_t, Config>(i, interpolate(space, cur.waypoints[i], cur.waypoints[i + 1], t));
    };
    auto [i1, p1] = locate(s1);
    auto [i2, p2] = locate(s2);
    double direct = distance(space, p1, p2);
    if (direct >= (s2 - s1) - 1e-12) continue;
    if (!edge_valid(space, model, grid, p1, p2, edge_step, rule).valid) continue;
    // re-check the boundary stubs too: a sub-segment samples different
    // interior points than the edge it was cut from, so validity of the
    // parent edge does not transfer under discretized checking
    if (p1 != cur.waypoints[i1] &&
        !edge_valid(space, model, grid, cur.waypoints[i1], p1, edge_step, rule).valid)
      continue;
    if (p2 != cur.waypoints[i2 + 1] &&
        !edge_valid(space, model, grid, p2, cur.waypoints[i2 + 1], edge_step, rule).valid)
      continue;
    std::vector<Config> next(cur.waypoints.begin(), cur.waypoints.begin() + i1 + 1);
    if (next.back() != p1) next.push_back(p1);
    if (next.back() != p2) next.push_back(p2);
    for (size_t k = i2 + 1; k < cur.waypoints.size(); ++k)
      if (next.back() != cur.waypoints[k]) next.push_back(cur.waypoints[k]);
    cur.waypoints = std::move(next);
    cur.length = path_length(space, cur.waypoints);
  }
  return cur;
}

struct LocalPlanParams {
  int nodes = 400;
  double gamma = 6.0;
  double edge_step = 0.05;
  double region_half = 3.5;  // base-position half-extent around the window center
  int refine = 200;          // shortcut passes applied to roadmap paths
  uint64_t seed = 0;
};

// Planning oracle restricted to the obstacles a window contains. Builds
// one roadmap around the window plus distance fields from both query
// endpoints, so arbitrarily many candidate waypoints can be scored with a
// couple of edge checks each. Roadmap paths are tightened by shortcutting
// before they are reported; raw graph distances overestimate the optimum
// by an amount that depends on node luck, and the labels compare via-paths
// against the optimum, so both sides get the same treatment.
struct LocalOracle {
  const LocalWindow* window;
  const SnakeModel* model;
  const CSpace* space;
  LocalPlanParams params;
  Config qs, qg;
  Roadmap rm;
  std::vector<double> dist_s, dist_g;  // over roadmap nodes + {qs, qg}
  std::vector<int> parent_s, parent_g;
  std::optional<Path> tau_path;
  double tau_star_len = kInf;

  LocalOracle(const LocalWindow& w, const SnakeModel& m, const CSpace& sp, const Config& start,
              const Config& goal, const LocalPlanParams& p)
      : window(&w), model(&m), space(&sp), params(p), qs(start), qg(goal) {
    Region region;
    region.lo.assign(sp.dims.size(), 0.0);
    region.hi.assign(sp.dims.size(), 0.0);
    for (size_t i = 0; i < sp.dims.size(); ++i) {
      if (i < 2) {
        double c = i == 0 ? w.center.x : w.center.y;
        region.lo[i] = std::max(sp.dims[i].lo, c - p.region_half);
        region.hi[i] = std::min(sp.dims[i].hi, c + p.region_half);
      } else {
        region.lo[i] = sp.dims[i].kind == DimKind::Angular ? -kPi : sp.dims[i].lo;
        region.hi[i] = sp.dims[i].kind == DimKind::Angular ? kPi : sp.dims[i].hi;
      }
    }
    Rng rng(mix64(p.seed, 0x10ca10ab));
    PrmParams pp;
    pp.gamma = p.gamma;
    pp.edge_step = p.edge_step;
    pp.rule = OutsideRule::Free;
    pp.region = &region;
    rm = build_prm_star(w.patch, m, sp, p.nodes, rng, pp);

    int n = int(rm.nodes.size());
    auto adj = rm.adj;
    adj.resize(n + 2);
    bool endpoints_free = !in_collision(m, qs, w.patch, OutsideRule::Free) &&
                          !in_collision(m, qg, w.patch, OutsideRule::Free);
    if (endpoints_free) {
      for (auto& [v, wgt] : connect_point(rm, qs, w.patch, m, sp, p.edge_step, OutsideRule::Free)) {
        adj[n].emplace_back(v, wgt);
        adj[v].emplace_back(n, wgt);
      }
      for (auto& [v, wgt] : connect_point(rm, qg, w.patch, m, sp, p.edge_step, OutsideRule::Free)) {
        adj[n + 1].emplace_back(v, wgt);
        adj[v].emplace_back(n + 1, wgt);
      }
    }
    auto rs = dijkstra(adj, n);
    auto rg = dijkstra(adj, n + 1);
    dist_s = std::move(rs.dist);
    parent_s = std::move(rs.parent);
    dist_g = std::move(rg.dist);
    parent_g = std::move(rg.parent);
    if (qs == qg && endpoints_free) {
      tau_star_len = 0.0;
      tau_path = Path{{qs}, 0.0};
    } else if (dist_s[n + 1] < kInf) {
      Path raw;
      raw.length = dist_s[n + 1];
      for (int v = n + 1; v != -1; v = parent_s[v]) raw.waypoints.push_back(node_config(v));
      std::reverse(raw.waypoints.begin(), raw.waypoints.end());
      Rng rng(mix64(p.seed, 0x7a05a1));
      tau_path = shortcut(raw, w.patch, m, sp, p.refine, rng, p.edge_step, OutsideRule::Free);
      tau_star_len = tau_path->length;
    }
  }

  Config node_config(int v) const {
    int n = int(rm.nodes.size());
    return v == n ? qs : (v == n + 1 ? qg : rm.nodes[v]);
  }

  std::optional<Path> tau_star() const { return tau_path; }

  // Length of the best start -> q -> goal route: each leg is the roadmap
  // shortest path through q's best entry node, tightened by shortcutting.
  double via_length(const Config& q) const {
    if (tau_star_len == kInf) return kInf;
    if (q == qs || q == qg) return tau_star_len;
    if (in_collision(*model, q, window->patch, OutsideRule::Free)) return kInf;
    int best_s = -1, best_g = -1;
    double len_s = kInf, len_g = kInf;
    for (auto& [v, w] :
         connect_point(rm, q, window->patch, *model, *space, params.edge_step, OutsideRule::Free)) {
      if (dist_s[v] + w < len_s) len_s = dist_s[v] + w, best_s = v;
      if (dist_g[v] + w < len_g) len_g = dist_g[v] + w, best_g = v;
    }
    if (best_s < 0 || best_g < 0) return kInf;
    return refined_leg(q, best_s, parent_s, 0x1e61) + refined_leg(q, best_g, parent_g, 0x1e62);
  }

 private:
  // Path from q through entry node `v` along the parent chain down to the
  // dijkstra source, after shortcutting.
  double refined_leg(const Config& q, int v, const std::vector<int>& parent, uint64_t tag) const {
    Path leg;
    leg.waypoints.push_back(q);
    for (int u = v; u != -1; u = parent[u]) leg.waypoints.push_back(node_config(u));
    leg.length = path_length(*space, leg.waypoints);
    Rng rng(mix64(params.seed, tag));
    return shortcut(leg, window->patch, *model, *space, params.refine, rng, params.edge_step,
                    OutsideRule::Free)
        .length;
  }
};

inline std::optional<Path> local_optimal_path(const LocalWindow& w, const SnakeModel& m,
                                              const CSpace& sp, const Config& qs, const Config& qg,
                                              const LocalPlanParams& p = {}) {
  return LocalOracle(w, m, sp, qs, qg, p).tau_star();
}

// First waypoint strictly after the start whose base position lies inside
// the window; nullopt when no waypoint qualifies.
inline std::optional<Config> extract_optimal_waypoint(const Path& path, const LocalWindow& w) {
  if (path.waypoints.empty()) throw std::invalid_argument("extract_optimal_waypoint: empty path");
  for (size_t i = 1; i < path.waypoints.size(); ++i)
    if (inside_window(w, path.waypoints[i][0], path.waypoints[i][1])) return path.waypoints[i];
  return std::nullopt;
}

// (label, via-length): a waypoint is positive when routing through it
// costs at most tol times the optimum of the same window-restricted
// roadmap.
inline std::pair<int, double> label_waypoint(const Config& q, const Config& qs, const Config& qg,
                                             const LocalWindow& w, const SnakeModel& m,
                                             const CSpace& sp, double tol = 1.05,
                                             const LocalPlanParams& p = {}) {
  LocalOracle oracle(w, m, sp, qs, qg, p);
  double via = oracle.via_length(q);
  if (oracle.tau_star_len == kInf) return {0, kInf};
  return {via <= tol * oracle.tau_star_len ? 1 : 0, via};
}

struct OracleParams {
  int nodes = 4000;
  double gamma = 6.0;
  double edge_step = 0.05;
  int refine_attempts = 300;  // shortcut passes tightening the estimate
};

inline Roadmap build_oracle_roadmap(const OccupancyGrid& grid, const SnakeModel& model,
                                    const CSpace& space, const OracleParams& p, uint64_t seed) {
  Rng rng(mix64(seed, 0x0dac1e));
  PrmParams pp;
  pp.gamma = p.gamma;
  pp.edge_step = p.edge_step;
  return build_prm_star(grid, model, space, p.nodes, rng, pp);
}

// Ground-truth path length estimate: dense-roadmap shortest path, then a
// deterministic shortcut pass so the value tracks the true optimum from
// above tightly enough to serve as a benchmark denominator.
inline double oracle_query(const Roadmap& rm, const OccupancyGrid& grid, const SnakeModel& model,
                           const CSpace& space, const Config& qs, const Config& qg,
                           const OracleParams& p, uint64_t seed) {
  auto path = shortest_path(rm, qs, qg, grid, model, space, p.edge_step);
  if (!path) return kInf;
  Rng rng(mix64(seed, 0x5c077));
  Path refined = shortcut(*path, grid, model, space, p.refine_attempts, rng, p.edge_step);
  return refined.length;
}

inline double oracle_optimal_length(const OccupancyGrid& grid, const SnakeModel& model,
                                    const CSpace& space, const Config& qs, const Config& qg,
                                    const OracleParams& p, uint64_t seed) {
  Roadmap rm = build_oracle_roadmap(grid, model, space, p, seed);
  return oracle_query(rm, grid, model, space, qs, qg, p, seed);
}

namespace detail {

template <typename T>
void write_raw(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& f, const std::string& path) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("roadmap cache truncated: " + path);
  return v;
}

}  // namespace detail

// Versioned little-endian binary cache: magic, version, counts, node
// coordinates, then each undirected edge once.
inline void save_roadmap(const Roadmap& rm, const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "cache format is little-endian");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_roadmap: cannot open " + path);
  f.write("NRPM", 4);
  detail::write_raw(f, uint32_t(1));
  detail::write_raw(f, uint32_t(rm.nodes.size()));
  detail::write_raw(f, uint32_t(rm.nodes.empty() ? 0 : rm.nodes[0].size()));
  detail::write_raw(f, double(rm.gamma));
  detail::write_raw(f, double(rm.radius));
  for (auto& q : rm.nodes)
    for (double v : q) detail::write_raw(f, v);
  uint32_t edges = 0;
  for (int i = 0; i < int(rm.adj.size()); ++i)
    for (auto& [j, w] : rm.adj[i])
      if (j > i) ++edges;
  detail::write_raw(f, edges);
  for (int i = 0; i < int(rm.adj.size()); ++i)
    for (auto& [j, w] : rm.adj[i])
      if (j > i) {
        detail::write_raw(f, uint32_t(i));
        detail::write_raw(f, uint32_t(j));
        detail::write_raw(f, w);
      }
  if (!f) throw std::runtime_error("save_roadmap: write failed for " + path);
}

inline Roadmap load_roadmap(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_roadmap: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "NRPM", 4) != 0)
    throw std::runtime_error("load_roadmap: bad magic in " + path);
  uint32_t version = detail::read_raw<uint32_t>(f, path);
  if (version != 1) throw std::runtime_error("load_roadmap: unsupported version in " + path);
  uint32_t n = detail::read_raw<uint32_t>(f, path);
  uint32_t dim = detail::read_raw<uint32_t>(f, path);
  Roadmap rm;
  rm.gamma = detail::read_raw<double>(f, path);
  rm.radius = detail::read_raw<double>(f, path);
  rm.nodes.assign(n, Config(dim));
  for (auto& q : rm.nodes)
    for (auto& v : q) v = detail::read_raw<double>(f, path);
  rm.adj.assign(n, {});
  uint32_t edges = detail::read_raw<uint32_t>(f, path);
  for (uint32_t e = 0; e < edges; ++e) {
    uint32_t i = detail::read_raw<uint32_t>(f, path);
    uint32_t j = detail::read_raw<uint32_t>(f, path);
    double w = detail::read_raw<double>(f, path);
    if (i >= n || j >= n) throw std::runtime_error("load_roadmap: edge index out of range in " + path);
    rm.adj[i].emplace_back(int(j), w);
    rm.adj[j].emplace_back(int(i), w);
  }
  return rm;
}

}  // namespace nrp
