#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "nrp/dataset.hpp"
#include "nrp/nrp_planner.hpp"
#include "nrp/svg.hpp"

namespace nrp {

// One benchmark contender: the algorithm, its parameters, and (for the
// learned kinds) a weights file. `name` is the row label and must be
// unique within a spec.
struct PlannerSpec {
  std::string name;
  std::string kind;     // rrt | rrt-is | irrt* | nrp-d | nrp-g | nrp-u | nrp*-d | nrp*-g | nrp*-u
  std::string weights;  // .nrpw path, required for the -d and -g kinds
  PlannerParams classic;
  NrpParams nrp;
  int n_cand = 32;
};

inline bool planner_kind_known(const std::string& k) {
  static const std::set<std::string> kinds = {"rrt",   "rrt-is", "irrt*", "nrp-d", "nrp-g",
                                              "nrp-u", "nrp*-d", "nrp*-g", "nrp*-u"};
  return kinds.count(k) > 0;
}

inline bool planner_kind_uses_sampler(const std::string& k) { return k.rfind("nrp", 0) == 0; }

// Paper-tabled defaults per sampler kind; everything else comes from the
// NrpParams initializers.
inline NrpParams default_nrp_params(const std::string& sampler_kind) {
  NrpParams p;
  if (sampler_kind == "gen")
    p.goal_bias = 0.4;
  else if (sampler_kind != "disc" && sampler_kind != "uniform")
    throw std::invalid_argument("default_nrp_params: unknown sampler kind " + sampler_kind);
  return p;
}

struct BenchSpec {
  std::string env_dir;
  std::vector<std::string> envs;
  int queries_per_env = 5;
  double query_d_max = 1e9;  // whole-map queries unless narrowed
  int query_tries = 200;
  int oracle_nodes = 2000;
  std::vector<PlannerSpec> planners;
  Budget::Mode budget_mode = Budget::Mode::Expansions;
  std::vector<double> budgets;
  int runs = 1;
  int threads = 1;
  uint64_t seed = 0;
  std::string robot;      // robot JSON path; empty = built-in default model
  std::string plots_dir;  // when set, a top-down SVG per solved cell

  void check() const {
    if (envs.empty()) throw std::invalid_argument("bench: no environments");
    if (queries_per_env < 1 || runs < 1 || threads < 1 || oracle_nodes < 1)
      throw std::invalid_argument("bench: queries_per_env, runs, threads, oracle_nodes must be >= 1");
    if (budgets.empty()) throw std::invalid_argument("bench: empty budget grid");
    for (size_t i = 0; i < budgets.size(); ++i) {
      if (budgets[i] <= 0) throw std::invalid_argument("bench: budgets must be positive");
      if (i && budgets[i] <= budgets[i - 1])
        throw std::invalid_argument("bench: budget grid must be strictly increasing");
    }
    std::set<std::string> names;
    for (const PlannerSpec& p : planners) {
      if (!planner_kind_known(p.kind))
        throw std::invalid_argument("bench: unknown planner kind " + p.kind);
      if (!names.insert(p.name).second)
        throw std::invalid_argument("bench: duplicate planner name " + p.name);
    }
  }
};

struct BenchRow {
  std::string planner, env;
  int query = 0, run = 0;
  double budget = 0.0;
  int success = 0;
  double path_len = kInf, oracle_len = kInf;
  long expansions = 0;
  double wall_ms = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
};

inline constexpr const char* kBenchCsvHeader =
    "planner,env,query,run,budget,success,path_len,oracle_len,expansions,wall_ms";

namespace detail {

inline std::string csv_row(const BenchRow& r) {
  std::string out = r.planner;
  out += ',';
  out += r.env;
  out += ',';
  out += std::to_string(r.query);
  out += ',';
  out += std::to_string(r.run);
  out += ',';
  out += format_double(r.budget);
  out += ',';
  out += std::to_string(r.success);
  out += ',';
  out += format_double(r.path_len);
  out += ',';
  out += format_double(r.oracle_len);
  out += ',';
  out += std::to_string(r.expansions);
  out += ',';
  out += format_double(r.wall_ms);
  return out;
}

}  // namespace detail

inline void save_report(const BenchReport& rpt, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_report: cannot open " + path);
  f << kBenchCsvHeader << '\n';
  for (const BenchRow& r : rpt.rows) f << detail::csv_row(r) << '\n';
  if (!f) throw std::runtime_error("save_report: write failed: " + path);
}

inline BenchReport load_report(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_report: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != kBenchCsvHeader)
    throw std::runtime_error("load_report: bad header in " + path);
  BenchReport rpt;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i)
      if (i == line.size() || line[i] == ',') {
        cols.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    if (cols.size() != 10)
      throw std::runtime_error("load_report: " + path + " line " + std::to_string(line_no) +
                               ": expected 10 columns");
    BenchRow r;
    r.planner = cols[0];
    r.env = cols[1];
    r.query = std::stoi(cols[2]);
    r.run = std::stoi(cols[3]);
    r.budget = std::strtod(cols[4].c_str(), nullptr);
    r.success = std::stoi(cols[5]);
    r.path_len = std::strtod(cols[6].c_str(), nullptr);
    r.oracle_len = std::strtod(cols[7].c_str(), nullptr);
    r.expansions = std::stol(cols[8]);
    r.wall_ms = std::strtod(cols[9].c_str(), nullptr);
    rpt.rows.push_back(std::move(r));
  }
  return rpt;
}

// ---------------------------------------------------------------------
// Spec JSON

inline PlannerSpec planner_spec_from_json(const nlohmann::json& j) {
  PlannerSpec p;
  p.kind = j.at("kind").get<std::string>();
  if (!planner_kind_known(p.kind)) throw std::invalid_argument("bench: unknown planner kind " + p.kind);
  p.name = j.value("name", p.kind);
  p.weights = j.value("weights", std::string());
  if (planner_kind_uses_sampler(p.kind)) {
    std::string sampler = p.kind.back() == 'd' ? "disc" : (p.kind.back() == 'g' ? "gen" : "uniform");
    p.nrp = default_nrp_params(sampler);
    if (sampler != "uniform" && p.weights.empty())
      throw std::invalid_argument("bench: planner " + p.name + " (" + p.kind + ") needs weights");
    p.nrp.goal_bias = j.value("goal_bias", p.nrp.goal_bias);
    p.nrp.sp_rate = j.value("sp_rate", p.nrp.sp_rate);
    p.nrp.window = j.value("window", p.nrp.window);
    p.nrp.d_max = j.value("d_max", p.nrp.d_max);
    p.nrp.eta = j.value("eta", p.nrp.eta);
    p.nrp.edge_step = j.value("edge_step", p.nrp.edge_step);
    p.nrp.rewire_gamma = j.value("rewire_gamma", p.nrp.rewire_gamma);
    p.nrp.single_vertex = j.value("single_vertex", p.nrp.single_vertex);
    p.nrp.check();
    p.n_cand = j.value("n_cand", p.n_cand);
    if (p.n_cand < 1) throw std::invalid_argument("bench: n_cand must be >= 1");
  } else {
    p.classic.goal_bias = j.value("goal_bias", p.classic.goal_bias);
    p.classic.eta = j.value("eta", p.classic.eta);
    p.classic.edge_step = j.value("edge_step", p.classic.edge_step);
    p.classic.rewire_gamma = j.value("rewire_gamma", p.classic.rewire_gamma);
  }
  return p;
}

inline BenchSpec bench_spec_from_json(const nlohmann::json& j) {
  BenchSpec s;
  s.env_dir = j.at("env_dir").get<std::string>();
  s.envs = j.at("envs").get<std::vector<std::string>>();
  s.queries_per_env = j.value("queries_per_env", s.queries_per_env);
  s.query_d_max = j.value("query_d_max", s.query_d_max);
  s.query_tries = j.value("query_tries", s.query_tries);
  s.oracle_nodes = j.value("oracle_nodes", s.oracle_nodes);
  std::string mode = j.value("budget_mode", std::string("expansions"));
  if (mode == "expansions")
    s.budget_mode = Budget::Mode::Expansions;
  else if (mode == "time")
    s.budget_mode = Budget::Mode::Time;
  else
    throw std::invalid_argument("bench: budget_mode must be expansions or time");
  s.budgets = j.at("budgets").get<std::vector<double>>();
  s.runs = j.value("runs", s.runs);
  s.threads = j.value("threads", s.threads);
  s.seed = j.value("seed", uint64_t(0));
  s.robot = j.value("robot", std::string());
  s.plots_dir = j.value("plots_dir", std::string());
  for (const auto& pj : j.at("planners")) s.planners.push_back(planner_spec_from_json(pj));
  s.check();
  return s;
}

inline BenchSpec load_bench_spec(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_bench_spec: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("load_bench_spec: " + path + ": " + e.what());
  }
  return bench_spec_from_json(j);
}

// ---------------------------------------------------------------------
// Running

namespace detail {

// Weights are loaded once per contender and shared read-only by cells.
struct LoadedPlanner {
  PlannerSpec spec;
  std::optional<DiscModel> disc;
  std::optional<GenModel> gen;
};

inline LoadedPlanner load_planner(const PlannerSpec& ps) {
  LoadedPlanner lp;
  lp.spec = ps;
  bool want_disc = ps.kind == "nrp-d" || ps.kind == "nrp*-d";
  bool want_gen = ps.kind == "nrp-g" || ps.kind == "nrp*-g";
  if (want_disc) lp.disc = DiscModel::from_params(load_weights(ps.weights));
  if (want_gen) lp.gen = GenModel::from_params(load_weights(ps.weights));
  return lp;
}

inline PlanResult run_planner_once(const LoadedPlanner& lp, const OccupancyGrid& grid,
                                   const SnakeModel& model, const CSpace& space, const Config& qs,
                                   const Config& qg, const Budget& budget, uint64_t seed) {
  const PlannerSpec& ps = lp.spec;
  if (ps.kind == "rrt") return plan_rrt(grid, model, space, qs, qg, ps.classic, budget, seed);
  if (ps.kind == "rrt-is") return plan_rrt_is(grid, model, space, qs, qg, ps.classic, budget, seed);
  if (ps.kind == "irrt*")
    return plan_irrt_star(grid, model, space, qs, qg, ps.classic, budget, seed);
  WaypointSampler sampler;
  if (lp.disc)
    sampler = make_disc_sampler(*lp.disc, grid, ps.n_cand);
  else if (lp.gen)
    sampler = make_gen_sampler(*lp.gen, grid);
  else
    sampler = make_uniform_waypoint_sampler(space);
  bool star = ps.kind.rfind("nrp*", 0) == 0;
  return star ? plan_nrp_star(grid, model, space, sampler, qs, qg, ps.nrp, budget, seed)
              : plan_nrp(grid, model, space, sampler, qs, qg, ps.nrp, budget, seed);
}

// Budget-grid snapshots of a single max-budget run. In expansion mode a
// prefix of the run IS the run at the smaller budget (same seed, same
// draws), which is what makes success curves prefix-consistent.
inline void snapshot_rows(std::vector<BenchRow>& out, const PlanResult& res, const BenchSpec& spec,
                          const std::string& planner, const std::string& env, int query, int run,
                          double oracle_len) {
  bool by_exp = spec.budget_mode == Budget::Mode::Expansions;
  for (double b : spec.budgets) {
    const TraceRow* at = nullptr;
    for (const TraceRow& row : res.trace) {
      if ((by_exp ? double(row.expansions) : row.wall_s) > b) break;
      at = &row;
    }
    BenchRow r;
    r.planner = planner;
    r.env = env;
    r.query = query;
    r.run = run;
    r.budget = b;
    double best = at ? at->best_cost : kInf;
    r.success = std::isfinite(best) ? 1 : 0;
    r.path_len = best;
    r.oracle_len = oracle_len;
    r.expansions = by_exp ? std::min(res.expansions, long(b)) : (at ? at->expansions : 0);
    r.wall_ms = by_exp ? 0.0 : (at ? at->wall_s * 1000.0 : 0.0);
    out.push_back(std::move(r));
  }
}

struct EnvCtx {
  std::string id;
  OccupancyGrid grid;
  CSpace space;
  Roadmap oracle_rm;
  std::vector<Query> queries;
  std::vector<double> oracle_len;
};

}  // namespace detail

// Executes every (env, query, planner, run) cell at the largest budget
// and snapshots the trace at each grid point. Rows stream to `out_csv`
// (when given) in canonical order as cells finish, so partial runs leave
// a usable file. Cells run on `spec.threads` workers; models are shared
// read-only.
inline BenchReport run_benchmark(const BenchSpec& spec, const std::string& out_csv = "") {
  spec.check();
  SnakeModel model = spec.robot.empty() ? default_snake_model() : load_robot(spec.robot);

  std::vector<detail::LoadedPlanner> planners;
  planners.reserve(spec.planners.size());
  for (const PlannerSpec& ps : spec.planners) planners.push_back(detail::load_planner(ps));

  OracleParams op;
  op.nodes = spec.oracle_nodes;

  std::vector<detail::EnvCtx> envs;
  envs.reserve(spec.envs.size());
  for (const std::string& id : spec.envs) {
    detail::EnvCtx ctx;
    ctx.id = id;
    ctx.grid = load_env(spec.env_dir + "/" + id + ".pgm").grid;
    ctx.space = make_snake_cspace(model, ctx.grid);
    ctx.oracle_rm =
        build_oracle_roadmap(ctx.grid, model, ctx.space, op, mix64(spec.seed, env_key(id), 0xbe));
    Rng qrng(mix64(spec.seed, env_key(id), 0x5e1ec7));
    ctx.queries = sample_queries(id, ctx.grid, ctx.oracle_rm, model, ctx.space,
                                 spec.queries_per_env, qrng, spec.query_d_max, spec.query_tries);
    for (size_t qi = 0; qi < ctx.queries.size(); ++qi)
      ctx.oracle_len.push_back(oracle_query(ctx.oracle_rm, ctx.grid, model, ctx.space,
                                            ctx.queries[qi].qs, ctx.queries[qi].qg, op,
                                            mix64(spec.seed, env_key(id), 0x0e, uint64_t(qi))));
    envs.push_back(std::move(ctx));
  }

  if (!spec.plots_dir.empty()) std::filesystem::create_directories(spec.plots_dir);

  // canonical cell order: env, query, planner, run
  struct Cell {
    int env, query, planner, run;
  };
  std::vector<Cell> cells;
  for (int e = 0; e < int(envs.size()); ++e)
    for (int q = 0; q < int(envs[e].queries.size()); ++q)
      for (int p = 0; p < int(planners.size()); ++p)
        for (int r = 0; r < spec.runs; ++r) cells.push_back({e, q, p, r});

  Budget budget = spec.budget_mode == Budget::Mode::Expansions
                      ? Budget::expansions(long(spec.budgets.back()))
                      : Budget::time(spec.budgets.back());

  auto run_cell = [&](const Cell& c) {
    const detail::EnvCtx& env = envs[size_t(c.env)];
    const detail::LoadedPlanner& lp = planners[size_t(c.planner)];
    uint64_t seed = mix64(mix64(spec.seed, env_key(lp.spec.name), env_key(env.id)),
                          uint64_t(c.query), uint64_t(c.run));
    PlanResult res = detail::run_planner_once(lp, env.grid, model, env.space,
                                              env.queries[size_t(c.query)].qs,
                                              env.queries[size_t(c.query)].qg, budget, seed);
    std::vector<BenchRow> rows;
    detail::snapshot_rows(rows, res, spec, lp.spec.name, env.id, c.query, c.run,
                          env.oracle_len[size_t(c.query)]);
    if (!spec.plots_dir.empty() && res.status == PlanStatus::Solved) {
      std::string file = spec.plots_dir + "/" + lp.spec.name + "_" + env.id + "_q" +
                         std::to_string(c.query) + "_r" + std::to_string(c.run) + ".svg";
      write_env_path_svg(file, env.grid, model, *res.path);
    }
    return rows;
  };

  BenchReport rpt;
  std::ofstream csv;
  if (!out_csv.empty()) {
    csv.open(out_csv, std::ios::binary);
    if (!csv) throw std::runtime_error("run_benchmark: cannot open " + out_csv);
    csv << kBenchCsvHeader << '\n';
  }
  auto emit = [&](const std::vector<BenchRow>& rows) {
    for (const BenchRow& r : rows) {
      if (csv.is_open()) csv << detail::csv_row(r) << '\n';
      rpt.rows.push_back(r);
    }
    if (csv.is_open()) csv.flush();
  };

  if (spec.threads == 1) {
    for (const Cell& c : cells) emit(run_cell(c));
  } else {
    // workers fill per-cell slots; the canonical-order prefix is flushed
    // under the same lock, so the CSV is identical to a sequential run
    std::vector<std::optional<std::vector<BenchRow>>> slots(cells.size());
    std::mutex mu;
    std::atomic<size_t> next{0};
    size_t flushed = 0;
    auto worker = [&] {
      while (true) {
        size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        auto rows = run_cell(cells[i]);
        std::lock_guard<std::mutex> lock(mu);
        slots[i] = std::move(rows);
        while (flushed < slots.size() && slots[flushed]) {
          emit(*slots[flushed]);
          slots[flushed].reset();
          ++flushed;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < spec.threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (csv.is_open() && !csv) throw std::runtime_error("run_benchmark: write failed: " + out_csv);
  return rpt;
}

// ---------------------------------------------------------------------
// Report metrics

struct MetricPoint {
  double budget = 0.0;
  double value = 0.0;
};

using MetricCurves = std::map<std::string, std::vector<MetricPoint>>;

namespace detail {

template <typename RowValue>
MetricCurves mean_by_budget(const BenchReport& rpt, RowValue&& value) {
  std::map<std::string, std::map<double, std::pair<double, long>>> acc;
  for (const BenchRow& r : rpt.rows) {
    auto& [sum, n] = acc[r.planner][r.budget];
    sum += value(r);
    n += 1;
  }
  MetricCurves out;
  for (auto& [planner, by_budget] : acc)
    for (auto& [budget, sn] : by_budget)
      out[planner].push_back({budget, sn.first / double(sn.second)});
  return out;
}

}  // namespace detail

inline MetricCurves metric_success_rate(const BenchReport& rpt) {
  return detail::mean_by_budget(rpt, [](const BenchRow& r) { return double(r.success); });
}

// Oracle length over computed length, zero on failure; the curve starts
// at zero and climbs toward one as budgets grow.
inline MetricCurves metric_relative_optimality(const BenchReport& rpt) {
  return detail::mean_by_budget(rpt, [](const BenchRow& r) {
    if (!r.success || !std::isfinite(r.path_len) || !std::isfinite(r.oracle_len) || r.path_len <= 0)
      return 0.0;
    return r.oracle_len / r.path_len;
  });
}

// ---------------------------------------------------------------------
// Exploration metrics over tree snapshots

// Seeded collision-free probe configurations for visibility scoring.
inline std::vector<Config> make_probe_set(const OccupancyGrid& grid, const SnakeModel& model,
                                          const CSpace& space, int n, uint64_t seed) {
  Rng rng(mix64(seed, 0x9c0be5));
  std::vector<Config> probes;
  probes.reserve(size_t(n));
  long tries = 0, max_tries = 1000L * n;
  while (int(probes.size()) < n) {
    if (++tries > max_tries)
      throw std::runtime_error("make_probe_set: free-space sampling stalled; map looks sealed");
    Config q = sample_uniform(space, rng);
    if (!in_collision(model, q, grid)) probes.push_back(std::move(q));
  }
  return probes;
}

// Fraction of probes connectable to the tree by one valid straight edge
// of length <= eta, evaluated at each trace snapshot. Trees only grow, so
// each probe is resolved to the first vertex index that connects and the
// per-snapshot fraction falls out of the prefix sizes.
inline std::vector<double> metric_visibility(const Tree& tree, const std::vector<TraceRow>& trace,
                                             const std::vector<Config>& probes,
                                             const OccupancyGrid& grid, const SnakeModel& model,
                                             const CSpace& space, double eta,
                                             double edge_step = 0.05) {
  if (probes.empty()) throw std::invalid_argument("metric_visibility: empty probe set");
  std::vector<int> first_connect(probes.size(), -1);
  for (size_t pi = 0; pi < probes.size(); ++pi)
    for (int v = 0; v < tree.size(); ++v) {
      if (distance(space, probes[pi], tree.verts[v]) > eta) continue;
      if (!edge_valid(space, model, grid, probes[pi], tree.verts[v], edge_step).valid) continue;
      first_connect[pi] = v;
      break;
    }
  std::vector<double> out;
  out.reserve(trace.size());
  for (const TraceRow& row : trace) {
    long hit = 0;
    for (int fc : first_connect)
      if (fc >= 0 && fc < row.tree_size) ++hit;
    out.push_back(double(hit) / double(probes.size()));
  }
  return out;
}

// Best oracle path length from any tree vertex to the goal, evaluated at
// each trace snapshot: each vertex is connected into the roadmap exactly
// the way a query point would be, plus the direct vertex-goal edge.
inline std::vector<double> metric_dist_to_goal(const Tree& tree, const std::vector<TraceRow>& trace,
                                               const Roadmap& rm, const OccupancyGrid& grid,
                                               const SnakeModel& model, const CSpace& space,
                                               const Config& qg, double edge_step = 0.05) {
  int n = int(rm.nodes.size());
  auto adj = rm.adj;
  adj.resize(size_t(n) + 1);
  for (auto& [v, w] : connect_point(rm, qg, grid, model, space, edge_step)) {
    adj[size_t(n)].emplace_back(v, w);
    adj[size_t(v)].emplace_back(n, w);
  }
  auto from_goal = dijkstra(adj, n);

  std::vector<double> vertex_best(size_t(tree.size()), kInf);
  double r_direct = prm_star_radius(rm.gamma, n + 2, space.size());
  for (int v = 0; v < tree.size(); ++v) {
    double best = kInf;
    double dg = distance(space, tree.verts[v], qg);
    if (dg <= r_direct && edge_valid(space, model, grid, tree.verts[v], qg, edge_step).valid)
      best = dg;
    for (auto& [node, w] : connect_point(rm, tree.verts[v], grid, model, space, edge_step))
      best = std::min(best, w + from_goal.dist[size_t(node)]);
    vertex_best[size_t(v)] = best;
  }
  std::vector<double> prefix_min(vertex_best.size() + 1, kInf);
  for (size_t v = 0; v < vertex_best.size(); ++v)
    prefix_min[v + 1] = std::min(prefix_min[v], vertex_best[v]);

  std::vector<double> out;
  out.reserve(trace.size());
  for (const TraceRow& row : trace) out.push_back(prefix_min[size_t(row.tree_size)]);
  return out;
}

// Net wall time per unit of metric change across a trace, the summary
// the exploration tables report. Infinite when the metric never moved.
inline double time_per_unit_change(const std::vector<TraceRow>& trace,
                                   const std::vector<double>& values) {
  if (trace.size() != values.size() || trace.empty())
    throw std::invalid_argument("time_per_unit_change: trace/value size mismatch");
  double dv = std::abs(values.back() - values.front());
  if (dv <= 0 || !std::isfinite(dv)) return kInf;
  return (trace.back().wall_s - trace.front().wall_s) / dv;
}

// ---------------------------------------------------------------------
// Waypoint quality

// L(tau*) / L(tau via q) against the window-restricted oracle, capped at
// one; infeasible via-paths (or an infeasible query) score zero.
inline double waypoint_optimality_score(const LocalOracle& oracle, const Config& q) {
  if (oracle.tau_star_len >= kInf) return 0.0;
  double via = oracle.via_length(q);
  if (!(via < kInf)) return 0.0;
  if (via <= 0.0) return 1.0;  // degenerate query: start touches goal
  return std::min(1.0, oracle.tau_star_len / via);
}

inline double waypoint_optimality_score(const Config& q, const Config& qs, const Config& qg,
                                        const LocalWindow& w, const SnakeModel& model,
                                        const CSpace& space, const LocalPlanParams& p) {
  LocalOracle oracle(w, model, space, qs, qg, p);
  return waypoint_optimality_score(oracle, q);
}

// ---------------------------------------------------------------------
// Sampler evaluation

// Builds a window-relative sampler bound to one environment (global
// conditioning needs the whole grid, so binding happens per env).
using SamplerFactory = std::function<WaypointSampler(const OccupancyGrid& env)>;

struct SamplerScores {
  double train_mean = 0.0, test_mean = 0.0;
  int train_n = 0, test_n = 0;
};

// Mean waypoint optimality score of sampler proposals over the unique
// queries of a dataset, split into training and held-out environments.
// The oracle for each query is rebuilt from the dataset's derived seed,
// so scores are comparable with the labels the records carry.
inline SamplerScores eval_sampler(const SamplerFactory& make_sampler,
                                  const std::vector<SampleRecord>& records,
                                  const std::map<std::string, OccupancyGrid>& envs,
                                  const std::set<std::string>& test_envs, const SnakeModel& model,
                                  const LocalPlanParams& lp, double window_size,
                                  uint64_t pipeline_seed, uint64_t eval_seed) {
  std::set<std::string> seen;
  SamplerScores out;
  std::map<std::string, WaypointSampler> samplers;
  uint64_t idx = 0;
  for (const SampleRecord& rec : records) {
    std::string key = rec.env;
    key += "," + detail::format_double(rec.cx) + "," + detail::format_double(rec.cy);
    for (double v : rec.qs) key += "," + detail::format_double(v);
    for (double v : rec.qg) key += "," + detail::format_double(v);
    if (!seen.insert(key).second) continue;
    auto eit = envs.find(rec.env);
    if (eit == envs.end())
      throw std::invalid_argument("eval_sampler: records reference unknown env " + rec.env);
    const OccupancyGrid& grid = eit->second;
    CSpace space = make_snake_cspace(model, grid);
    LocalWindow w = extract_window(grid, {rec.cx, rec.cy}, window_size);

    LocalPlanParams qlp = lp;
    qlp.seed = query_oracle_seed(pipeline_seed, rec.env, rec.cx, rec.cy);
    // records carry window-relative endpoints; the oracle wants absolute
    Config qs_abs = detail::to_absolute(rec.qs, rec.cx, rec.cy);
    Config qg_abs = detail::to_absolute(rec.qg, rec.cx, rec.cy);
    LocalOracle oracle(w, model, space, qs_abs, qg_abs, qlp);

    const Config& qs_l = rec.qs;
    const Config& qg_l = rec.qg;
    auto sit = samplers.find(rec.env);
    if (sit == samplers.end()) sit = samplers.emplace(rec.env, make_sampler(grid)).first;
    Rng rng(mix64(eval_seed, env_key(rec.env), idx++));
    Config wp = sit->second(w, qs_l, qg_l, rng);
    wp[0] += w.center.x;
    wp[1] += w.center.y;
    wp[0] = std::clamp(wp[0], w.patch.min_x(), w.patch.max_x());
    wp[1] = std::clamp(wp[1], w.patch.min_y(), w.patch.max_y());
    for (int i = 2; i < space.size(); ++i)
      wp[i] = std::clamp(wp[i], space.dims[i].lo, space.dims[i].hi);

    double score = waypoint_optimality_score(oracle, wp);
    if (test_envs.count(rec.env)) {
      out.test_mean += score;
      out.test_n += 1;
    } else {
      out.train_mean += score;
      out.train_n += 1;
    }
  }
  if (out.train_n) out.train_mean /= double(out.train_n);
  if (out.test_n) out.test_mean /= double(out.test_n);
  return out;
}

// ---------------------------------------------------------------------
// Plots

// Success and optimality curves from a report. Exploration traces carry
// tree snapshots the CSV does not, so those charts are rendered by the
// callers that hold PlanResults, via write_line_chart.
inline void emit_plots(const BenchReport& rpt, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto to_series = [](const MetricCurves& curves) {
    std::vector<Series> out;
    for (const auto& [name, pts] : curves) {
      Series s;
      s.name = name;
      for (const MetricPoint& p : pts) s.pts.emplace_back(p.budget, p.value);
      out.push_back(std::move(s));
    }
    return out;
  };
  write_line_chart(out_dir + "/success_rate.svg", "Planning success rate", "budget",
                   "success rate", to_series(metric_success_rate(rpt)));
  write_line_chart(out_dir + "/relative_optimality.svg", "Relative path optimality", "budget",
                   "oracle / path", to_series(metric_relative_optimality(rpt)));
}

}  // namespace nrp
