#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nrp/roadmap.hpp"
#include "nrp/world.hpp"

namespace nrp {

// One supervised training example. Configurations are stored relative to
// the window: base positions have the window center subtracted, joint
// values are kept as-is. The window patch itself is not stored; loaders
// re-extract it from the referenced environment at (cx, cy).
struct SampleRecord {
  std::string env;
  double cx = 0.0, cy = 0.0;
  Config qs, qg, wp;
  int label = 0;
  double tau_len = 0.0;

  bool operator==(const SampleRecord&) const = default;
};

struct Query {
  std::string env;
  Config qs, qg;  // absolute configurations; window center = qs base position
};

struct EnvEntry {
  std::string id;
  OccupancyGrid grid;
};

struct DatasetParams {
  int queries_per_env = 500;
  int waypoints_per_query = 8;
  bool generative = false;
  double d_max = 3.0;   // weighted-metric cap on query length
  double window = 4.0;  // meters, local window edge length
  double tol = 1.05;    // optimality tolerance for positive labels
  double min_positive_fraction = 0.25;
  int query_tries = 200;   // rejection budget per query
  int roadmap_nodes = 1000;  // connectivity-filter roadmap size
  LocalPlanParams local;   // local oracle sizing
  uint64_t seed = 0;
};

struct CollectStats {
  int queries = 0;
  int solved = 0;
  int skipped_no_path = 0;
  int skipped_no_waypoint = 0;
};

// Stable string hash (FNV-1a) so seed derivation does not depend on the
// standard library's std::hash choice.
inline uint64_t env_key(const std::string& id) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Every query's local roadmap seed is a pure function of (pipeline seed,
// env id, window center), so a loader can rebuild the exact oracle that
// produced a record's labels.
inline uint64_t query_oracle_seed(uint64_t pipeline_seed, const std::string& env, double cx,
                                  double cy) {
  return mix64(mix64(pipeline_seed, env_key(env)), std::bit_cast<uint64_t>(cx),
               std::bit_cast<uint64_t>(cy));
}

namespace detail {

// Component id per roadmap node, for the query connectivity filter.
inline std::vector<int> roadmap_components(const Roadmap& rm) {
  std::vector<int> comp(rm.nodes.size(), -1);
  int next = 0;
  std::vector<int> stack;
  for (size_t s = 0; s < rm.nodes.size(); ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = next;
    stack.push_back(int(s));
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (auto& [v, w] : rm.adj[u])
        if (comp[v] < 0) {
          comp[v] = next;
          stack.push_back(v);
        }
    }
    ++next;
  }
  return comp;
}

inline bool share_component(const std::vector<std::pair<int, double>>& a,
                            const std::vector<std::pair<int, double>>& b,
                            const std::vector<int>& comp) {
  for (auto& [va, wa] : a)
    for (auto& [vb, wb] : b)
      if (comp[va] == comp[vb]) return true;
  return false;
}

}  // namespace detail

// Uniform free start plus a nearby free goal that the roadmap can reach
// from the start; pairs that fail the distance cap, collide, or land in a
// different roadmap component are rejected, up to `tries` per query.
inline std::vector<Query> sample_queries(const std::string& env_id, const OccupancyGrid& grid,
                                         const Roadmap& rm, const SnakeModel& model,
                                         const CSpace& space, int n, Rng& rng, double d_max = 3.0,
                                         int tries = 200) {
  std::vector<Query> out;
  auto comp = detail::roadmap_components(rm);
  for (int k = 0; k < n; ++k) {
    for (int attempt = 0; attempt < tries; ++attempt) {
      Config qs = sample_uniform(space, rng);
      if (in_collision(model, qs, grid)) continue;
      Region ball;
      ball.lo.resize(space.size());
      ball.hi.resize(space.size());
      for (size_t i = 0; i < space.dims.size(); ++i) {
        double r = d_max / space.dims[i].weight;
        ball.lo[i] = std::max(space.dims[i].lo, qs[i] - r);
        ball.hi[i] = std::min(space.dims[i].hi, qs[i] + r);
      }
      Config qg = sample_uniform(space, rng, &ball);
      if (distance(space, qs, qg) > d_max) continue;
      if (in_collision(model, qg, grid)) continue;
      auto ca = connect_point(rm, qs, grid, model, space, 0.05);
      auto cb = connect_point(rm, qg, grid, model, space, 0.05);
      if (!detail::share_component(ca, cb, comp)) continue;
      out.push_back({env_id, std::move(qs), std::move(qg)});
      break;
    }
  }
  return out;
}

namespace detail {

inline Config to_window_relative(const Config& q, double cx, double cy) {
  Config r = q;
  r[0] -= cx;
  r[1] -= cy;
  return r;
}

inline Config to_absolute(const Config& q, double cx, double cy) {
  Config r = q;
  r[0] += cx;
  r[1] += cy;
  return r;
}

// Uniform waypoint with base position inside the window and joints in
// their limits, in absolute coordinates.
inline Config sample_window_waypoint(const LocalWindow& w, const CSpace& space, Rng& rng) {
  Config q(space.size());
  double half_x = 0.5 * w.patch.width * w.patch.resolution;
  double half_y = 0.5 * w.patch.height * w.patch.resolution;
  q[0] = rng.uniform(std::max(space.dims[0].lo, w.center.x - half_x),
                     std::min(space.dims[0].hi, w.center.x + half_x));
  q[1] = rng.uniform(std::max(space.dims[1].lo, w.center.y - half_y),
                     std::min(space.dims[1].hi, w.center.y + half_y));
  for (size_t i = 2; i < space.dims.size(); ++i)
    q[i] = rng.uniform(space.dims[i].lo, space.dims[i].hi);
  return q;
}

}  // namespace detail

// Collects supervised samples for the local waypoint samplers. Every
// query gets its own window-restricted oracle; discriminative mode labels
// one optimal plus several random waypoints, generative mode gathers
// several optimal waypoints by re-solving under jittered roadmap seeds.
inline std::vector<SampleRecord> build_dataset(const std::vector<EnvEntry>& envs,
                                               const SnakeModel& model, const DatasetParams& p,
                                               CollectStats* stats = nullptr) {
  std::vector<SampleRecord> records;
  CollectStats local_stats;
  CollectStats& st = stats ? *stats : local_stats;
  for (const EnvEntry& env : envs) {
    CSpace space = make_snake_cspace(model, env.grid);
    Rng env_rng(mix64(p.seed, env_key(env.id), 0xe7));
    Roadmap rm = build_prm_star(env.grid, model, space, p.roadmap_nodes, env_rng);
    auto queries = sample_queries(env.id, env.grid, rm, model, space, p.queries_per_env, env_rng,
                                  p.d_max, p.query_tries);
    st.queries += int(queries.size());
    for (const Query& query : queries) {
      double cx = query.qs[0], cy = query.qs[1];
      LocalWindow w = extract_window(env.grid, {cx, cy}, p.window);
      LocalPlanParams lp = p.local;
      lp.seed = query_oracle_seed(p.seed, env.id, cx, cy);
      LocalOracle oracle(w, model, space, query.qs, query.qg, lp);
      auto tau = oracle.tau_star();
      if (!tau) {
        ++st.skipped_no_path;
        continue;
      }
      auto wp = extract_optimal_waypoint(*tau, w);
      if (!wp) {
        ++st.skipped_no_waypoint;
        continue;
      }
      ++st.solved;
      auto emit = [&](const Config& q, int label, double tau_len) {
        records.push_back({query.env, cx, cy, detail::to_window_relative(query.qs, cx, cy),
                           detail::to_window_relative(query.qg, cx, cy),
                           detail::to_window_relative(q, cx, cy), label, tau_len});
      };
      if (p.generative) {
        emit(*wp, 1, oracle.tau_star_len);
        for (int j = 1; j < p.waypoints_per_query; ++j) {
          LocalPlanParams jp = lp;
          jp.seed = mix64(lp.seed, uint64_t(j));
          LocalOracle jittered(w, model, space, query.qs, query.qg, jp);
          auto jtau = jittered.tau_star();
          if (!jtau) continue;
          auto jwp = extract_optimal_waypoint(*jtau, w);
          if (!jwp) continue;
          emit(*jwp, 1, jittered.tau_star_len);
        }
      } else {
        double via_opt = oracle.via_length(*wp);
        emit(*wp, via_opt <= p.tol * oracle.tau_star_len ? 1 : 0, oracle.tau_star_len);
        for (int j = 1; j < p.waypoints_per_query; ++j) {
          Config q = detail::sample_window_waypoint(w, space, env_rng);
          double via = oracle.via_length(q);
          emit(q, via <= p.tol * oracle.tau_star_len ? 1 : 0, oracle.tau_star_len);
        }
      }
    }
  }
  if (!p.generative && !records.empty()) {
    // top up the positive share by swapping random negatives for copies
    // of random positives; the record count stays exactly as collected
    std::vector<size_t> pos, neg;
    for (size_t i = 0; i < records.size(); ++i) (records[i].label ? pos : neg).push_back(i);
    if (pos.empty())
      throw std::runtime_error("build_dataset: no positive records, cannot rebalance");
    Rng bal(mix64(p.seed, 0xba1a));
    long want = long(std::ceil(p.min_positive_fraction * double(records.size())));
    while (long(pos.size()) < want && !neg.empty()) {
      size_t ni = bal.index(neg.size());
      size_t pi = pos[bal.index(pos.size())];
      records[neg[ni]] = records[pi];
      pos.push_back(neg[ni]);
      neg[ni] = neg.back();
      neg.pop_back();
    }
  }
  return records;
}

// JSON-lines persistence: one record per line, numbers round-tripping
// exactly through the shortest-representation printer.
inline void save_dataset(const std::vector<SampleRecord>& records, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_dataset: cannot open " + path);
  for (const SampleRecord& r : records) {
    nlohmann::json j{{"env", r.env}, {"cx", r.cx},       {"cy", r.cy},          {"qs", r.qs},
                     {"qg", r.qg},   {"wp", r.wp},       {"label", r.label},    {"tau_len", r.tau_len}};
    f << j.dump() << '\n';
  }
  if (!f) throw std::runtime_error("save_dataset: write failed for " + path);
}

inline std::vector<SampleRecord> load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_dataset: cannot open " + path);
  std::vector<SampleRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      SampleRecord r;
      r.env = j.at("env").get<std::string>();
      r.cx = j.at("cx").get<double>();
      r.cy = j.at("cy").get<double>();
      r.qs = j.at("qs").get<Config>();
      r.qg = j.at("qg").get<Config>();
      r.wp = j.at("wp").get<Config>();
      r.label = j.at("label").get<int>();
      r.tau_len = j.at("tau_len").get<double>();
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_dataset: " + path + " line " + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return records;
}

// Environment files each record refers to, loaded once by id. A record
// naming an id with no file is a resolution error.
inline std::map<std::string, OccupancyGrid> resolve_envs(const std::vector<SampleRecord>& records,
                                                         const std::string& env_dir) {
  std::map<std::string, OccupancyGrid> envs;
  for (const SampleRecord& r : records) {
    if (envs.count(r.env)) continue;
    std::string path = env_dir + "/" + r.env + ".pgm";
    try {
      envs.emplace(r.env, load_env(path).grid);
    } catch (const std::exception& e) {
      throw std::runtime_error("resolve_envs: environment '" + r.env + "' failed to load: " +
                               e.what());
    }
  }
  return envs;
}

// Re-derives each positive record's label from scratch (fresh window,
// fresh oracle under the derived seed) and checks it against the stored
// tau_len; also enforces the geometric record invariants. Returns the
// number of records checked.
inline int validate_dataset(const std::vector<SampleRecord>& records,
                            const std::map<std::string, OccupancyGrid>& envs,
                            const SnakeModel& model, const DatasetParams& p) {
  int checked = 0;
  for (const SampleRecord& r : records) {
    auto it = envs.find(r.env);
    if (it == envs.end()) throw std::runtime_error("validate_dataset: unknown env " + r.env);
    const OccupancyGrid& grid = it->second;
    CSpace space = make_snake_cspace(model, grid);
    LocalWindow w = extract_window(grid, {r.cx, r.cy}, p.window);
    Config wp_abs = detail::to_absolute(r.wp, r.cx, r.cy);
    if (!inside_window(w, wp_abs[0], wp_abs[1]))
      throw std::runtime_error("validate_dataset: waypoint outside its window");
    for (size_t i = 2; i < space.dims.size(); ++i)
      if (wp_abs[i] < space.dims[i].lo - 1e-12 || wp_abs[i] > space.dims[i].hi + 1e-12)
        throw std::runtime_error("validate_dataset: waypoint violates joint limits");
    if (r.label != 1) continue;
    LocalPlanParams lp = p.local;
    lp.seed = query_oracle_seed(p.seed, r.env, r.cx, r.cy);
    LocalOracle oracle(w, model, space, detail::to_absolute(r.qs, r.cx, r.cy),
                       detail::to_absolute(r.qg, r.cx, r.cy), lp);
    double via = oracle.via_length(wp_abs);
    if (!(via <= p.tol * r.tau_len))
      throw std::runtime_error("validate_dataset: positive record fails relabeling (via " +
                               std::to_string(via) + " vs tau " + std::to_string(r.tau_len) + ")");
    ++checked;
  }
  return checked;
}

}  // namespace nrp
