// Command-line front end for the planning stack: environment generation,
// roadmap caching, single planning runs, dataset collection, sampler
// training and evaluation, benchmarking, and report plots.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "nrp/bench.hpp"
#include "nrp/training.hpp"

using namespace nrp;

namespace {

SnakeModel robot_or_default(const std::string& path) {
  return path.empty() ? default_snake_model() : load_robot(path);
}

Config parse_config(const std::string& text, const std::string& what) {
  Config q;
  const char* p = text.c_str();
  char* end = nullptr;
  while (*p) {
    if (*p == ',' || *p == ' ' || *p == '\t') {
      ++p;
      continue;
    }
    double v = std::strtod(p, &end);
    if (end == p) throw std::invalid_argument(what + ": cannot parse '" + text + "' as numbers");
    q.push_back(v);
    p = end;
  }
  if (q.empty()) throw std::invalid_argument(what + ": empty configuration");
  return q;
}

std::vector<std::string> split_ids(const std::string& text) {
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t i = 0; i <= text.size(); ++i)
    if (i == text.size() || text[i] == ',') {
      if (i > start) out.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  return out;
}

int cmd_gen_envs(int count, uint64_t seed, const std::string& out_dir, const std::string& rooms,
                 double doorway_min, double doorway_max, double extent, int furniture_min,
                 int furniture_max) {
  WorldGenParams p;
  if (!rooms.empty()) {
    if (std::sscanf(rooms.c_str(), "%dx%d", &p.room_rows, &p.room_cols) != 2)
      throw std::invalid_argument("gen-envs: --rooms expects RxC, e.g. 2x3");
  }
  p.doorway_min = doorway_min;
  p.doorway_max = doorway_max;
  p.extent_x = p.extent_y = extent;
  p.furniture_min = furniture_min;
  p.furniture_max = furniture_max;
  std::filesystem::create_directories(out_dir);
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "env_%03d", i);
    uint64_t env_seed = mix64(seed, uint64_t(i));
    OccupancyGrid g = generate_env(p, env_seed);
    save_env(g, p, env_seed, out_dir + "/" + id + ".pgm");
    std::cout << id << "\n";
  }
  return 0;
}

int cmd_roadmap(const std::string& env, const std::string& robot, int nodes, uint64_t seed,
                const std::string& out) {
  SnakeModel model = robot_or_default(robot);
  OccupancyGrid grid = load_env(env).grid;
  CSpace space = make_snake_cspace(model, grid);
  OracleParams op;
  op.nodes = nodes;
  Roadmap rm = build_oracle_roadmap(grid, model, space, op, seed);
  save_roadmap(rm, out);
  size_t edges = 0;
  for (const auto& a : rm.adj) edges += a.size();
  std::cout << "roadmap: " << rm.nodes.size() << " nodes, " << edges / 2 << " edges -> " << out
            << "\n";
  return 0;
}

int cmd_plan(const CLI::App& args, const std::string& env, const std::string& robot,
             const std::string& planner, const std::string& weights, const std::string& start,
             const std::string& goal, double time_budget, long expansion_budget, uint64_t seed,
             const std::string& out, const std::string& svg, int n_cand, double sp_rate,
             double goal_bias) {
  SnakeModel model = robot_or_default(robot);
  OccupancyGrid grid = load_env(env).grid;
  CSpace space = make_snake_cspace(model, grid);
  Config qs = parse_config(start, "--start");
  Config qg = parse_config(goal, "--goal");
  if (int(qs.size()) != space.size() || int(qg.size()) != space.size())
    throw std::invalid_argument("plan: start/goal must have " + std::to_string(space.size()) +
                                " values for this robot");

  nlohmann::json pj = {{"kind", planner}};
  if (!weights.empty()) pj["weights"] = weights;
  if (args.count("--n-cand")) pj["n_cand"] = n_cand;
  if (args.count("--sp-rate")) pj["sp_rate"] = sp_rate;
  if (args.count("--goal-bias")) pj["goal_bias"] = goal_bias;
  detail::LoadedPlanner lp = detail::load_planner(planner_spec_from_json(pj));

  Budget budget = args.count("--time-budget") ? Budget::time(time_budget)
                                              : Budget::expansions(expansion_budget);
  PlanResult res = detail::run_planner_once(lp, grid, model, space, qs, qg, budget, seed);

  nlohmann::json j;
  j["status"] = res.status == PlanStatus::Solved ? "solved" : "timeout";
  j["expansions"] = res.expansions;
  j["solved_at"] = res.solved_at;
  j["length"] = res.path ? nlohmann::json(res.path->length) : nlohmann::json();
  nlohmann::json waypoints = nlohmann::json::array();
  if (res.path)
    for (const Config& q : res.path->waypoints) waypoints.push_back(q);
  j["path"] = std::move(waypoints);
  nlohmann::json trace = nlohmann::json::array();
  for (const TraceRow& row : res.trace)
    trace.push_back({{"wall_s", row.wall_s},
                     {"expansions", row.expansions},
                     {"best_cost", row.best_cost},
                     {"tree_size", row.tree_size}});
  j["trace"] = std::move(trace);
  std::ofstream f(out, std::ios::binary);
  if (!f) throw std::runtime_error("plan: cannot open " + out);
  f << j.dump(2) << "\n";

  if (!svg.empty() && res.path) write_env_path_svg(svg, grid, model, *res.path);
  std::cout << "plan: " << std::string(j["status"]) << ", expansions " << res.expansions;
  if (res.path) std::cout << ", length " << res.path->length;
  std::cout << " -> " << out << "\n";
  return res.status == PlanStatus::Solved ? 0 : 2;
}

int cmd_collect(const std::string& envs_dir, const std::string& robot, int queries_per_env,
                int waypoints_per_query, const std::string& mode, uint64_t seed,
                const std::string& out, double d_max, double tol) {
  SnakeModel model = robot_or_default(robot);
  DatasetParams p;
  p.queries_per_env = queries_per_env;
  p.waypoints_per_query = waypoints_per_query;
  p.generative = mode == "gen";
  p.d_max = d_max;
  p.tol = tol;
  p.seed = seed;
  std::vector<EnvEntry> envs;
  for (const auto& entry : std::filesystem::directory_iterator(envs_dir)) {
    if (entry.path().extension() != ".pgm") continue;
    envs.push_back({entry.path().stem().string(), load_env(entry.path().string()).grid});
  }
  std::sort(envs.begin(), envs.end(),
            [](const EnvEntry& a, const EnvEntry& b) { return a.id < b.id; });
  if (envs.empty()) throw std::runtime_error("collect: no .pgm environments in " + envs_dir);
  CollectStats st;
  auto records = build_dataset(envs, model, p, &st);
  save_dataset(records, out);
  std::cout << "collect: " << envs.size() << " envs, " << st.queries << " queries, " << st.solved
            << " solved, " << records.size() << " records -> " << out << "\n";
  return 0;
}

int cmd_train(const std::string& data, const std::string& envs_dir, const std::string& robot,
              const std::string& model_type, bool global_conditioning, int epochs, double lr,
              int batch, uint64_t seed, const std::string& out) {
  SnakeModel model = robot_or_default(robot);
  auto records = load_dataset(data);
  auto envs = resolve_envs(records, envs_dir);
  ArchDesc arch = make_arch(model_type, model, global_conditioning);
  TrainConfig tc;
  tc.epochs = epochs;
  tc.lr = lr;
  tc.batch = batch;
  tc.seed = seed;
  ModelParams params;
  if (model_type == "disc")
    params = train_discriminative(records, envs, arch, tc, &std::cout).params;
  else
    params = train_generative(records, envs, arch, tc, &std::cout).params;
  save_weights(params, out);
  std::cout << "train: " << records.size() << " records -> " << out << "\n";
  return 0;
}

int cmd_bench(const std::string& spec_path, const std::string& out) {
  BenchSpec spec = load_bench_spec(spec_path);
  BenchReport rpt = run_benchmark(spec, out);
  std::cout << "bench: " << rpt.rows.size() << " rows -> " << out << "\n";
  return 0;
}

int cmd_eval_sampler(const std::string& weights, const std::string& data,
                     const std::string& envs_dir, const std::string& test_envs_csv, int n_cand,
                     uint64_t seed, uint64_t eval_seed, const std::string& out) {
  ModelParams params = load_weights(weights);
  auto records = load_dataset(data);
  auto envs = resolve_envs(records, envs_dir);

  SamplerFactory factory;
  if (params.arch.model == "disc") {
    auto model = std::make_shared<DiscModel>(DiscModel::from_params(params));
    factory = [model, n_cand](const OccupancyGrid& env) {
      return make_disc_sampler(*model, env, n_cand);
    };
  } else {
    auto model = std::make_shared<GenModel>(GenModel::from_params(params));
    factory = [model](const OccupancyGrid& env) { return make_gen_sampler(*model, env); };
  }

  std::set<std::string> test_envs;
  for (const std::string& id : split_ids(test_envs_csv)) test_envs.insert(id);
  SnakeModel robot = default_snake_model();
  if (params.arch.dim != robot.config_dim())
    throw std::runtime_error("eval-sampler: weights expect dim " +
                             std::to_string(params.arch.dim) + "; pass matching data");
  DatasetParams dp;  // score with the collection-time oracle sizing
  SamplerScores scores = eval_sampler(factory, records, envs, test_envs, robot, dp.local,
                                      params.arch.window, seed, eval_seed);
  nlohmann::json j = {{"train_mean", scores.train_mean},
                      {"test_mean", scores.test_mean},
                      {"train_n", scores.train_n},
                      {"test_n", scores.test_n}};
  std::ofstream f(out, std::ios::binary);
  if (!f) throw std::runtime_error("eval-sampler: cannot open " + out);
  f << j.dump(2) << "\n";
  std::cout << "eval-sampler: train " << scores.train_mean << " (" << scores.train_n << "), test "
            << scores.test_mean << " (" << scores.test_n << ") -> " << out << "\n";
  return 0;
}

int cmd_plot(const std::string& in, const std::string& out_dir) {
  emit_plots(load_report(in), out_dir);
  std::cout << "plot: " << out_dir << "/success_rate.svg, " << out_dir
            << "/relative_optimality.svg\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sampling-based planning toolkit: classical and learned-sampler planners on "
               "procedurally generated occupancy grids"};
  app.require_subcommand(1);

  // gen-envs
  auto* gen = app.add_subcommand("gen-envs", "Generate environment files (.pgm + .json sidecar)");
  int ge_count = 1;
  uint64_t ge_seed = 0;
  std::string ge_out, ge_rooms;
  WorldGenParams ge_defaults;
  double ge_dmin = ge_defaults.doorway_min, ge_dmax = ge_defaults.doorway_max;
  double ge_extent = ge_defaults.extent_x;
  int ge_fmin = ge_defaults.furniture_min, ge_fmax = ge_defaults.furniture_max;
  gen->add_option("--count", ge_count, "Number of environments");
  gen->add_option("--seed", ge_seed, "Master seed");
  gen->add_option("--out-dir", ge_out, "Output directory")->required();
  gen->add_option("--rooms", ge_rooms, "Room lattice RxC, e.g. 2x3");
  gen->add_option("--doorway-min", ge_dmin, "Narrowest doorway, meters");
  gen->add_option("--doorway-max", ge_dmax, "Widest doorway, meters");
  gen->add_option("--extent", ge_extent, "Map side length, meters");
  gen->add_option("--furniture-min", ge_fmin, "Minimum furniture per room");
  gen->add_option("--furniture-max", ge_fmax, "Maximum furniture per room");

  // roadmap
  auto* rmc = app.add_subcommand("roadmap", "Build and cache a dense roadmap for an environment");
  std::string rm_env, rm_robot, rm_out;
  int rm_nodes = 4000;
  uint64_t rm_seed = 0;
  rmc->add_option("--env", rm_env, "Environment .pgm")->required();
  rmc->add_option("--robot", rm_robot, "Robot model JSON (default: built-in)");
  rmc->add_option("--nodes", rm_nodes, "Roadmap size");
  rmc->add_option("--seed", rm_seed, "Roadmap seed");
  rmc->add_option("--out", rm_out, "Cache file")->required();

  // plan
  auto* plan = app.add_subcommand("plan", "Run one planner on one query");
  std::string pl_env, pl_robot, pl_planner, pl_weights, pl_start, pl_goal, pl_out, pl_svg;
  double pl_time = 1.0, pl_sp = 0.0, pl_gb = 0.0;
  long pl_exp = 1000;
  uint64_t pl_seed = 0;
  int pl_ncand = 32;
  plan->add_option("--env", pl_env, "Environment .pgm")->required();
  plan->add_option("--robot", pl_robot, "Robot model JSON (default: built-in)");
  plan->add_option("--planner", pl_planner,
                   "rrt | rrt-is | irrt* | nrp-d | nrp-g | nrp-u | nrp*-d | nrp*-g | nrp*-u")
      ->required();
  plan->add_option("--weights", pl_weights, "Sampler weights (.nrpw) for the learned kinds");
  plan->add_option("--start", pl_start, "Start configuration, comma separated")->required();
  plan->add_option("--goal", pl_goal, "Goal configuration, comma separated")->required();
  auto* pl_tb = plan->add_option("--time-budget", pl_time, "Budget, seconds");
  auto* pl_eb = plan->add_option("--expansion-budget", pl_exp, "Budget, expansions");
  pl_tb->excludes(pl_eb);
  pl_eb->excludes(pl_tb);
  plan->add_option("--seed", pl_seed, "Planner seed");
  plan->add_option("--out", pl_out, "Result JSON path")->required();
  plan->add_option("--svg", pl_svg, "Optional top-down SVG of the solved path");
  plan->add_option("--n-cand", pl_ncand, "Discriminative candidate count");
  plan->add_option("--sp-rate", pl_sp, "Straight-line expansion rate");
  plan->add_option("--goal-bias", pl_gb, "Goal bias");

  // collect
  auto* col = app.add_subcommand("collect", "Collect supervised waypoint records");
  std::string co_envs, co_robot, co_mode = "disc", co_out;
  int co_q = 500, co_w = 8;
  uint64_t co_seed = 0;
  DatasetParams co_defaults;
  double co_dmax = co_defaults.d_max, co_tol = co_defaults.tol;
  col->add_option("--envs", co_envs, "Environment directory")->required();
  col->add_option("--robot", co_robot, "Robot model JSON (default: built-in)");
  col->add_option("--queries-per-env", co_q, "Queries sampled per environment");
  col->add_option("--waypoints-per-query", co_w, "Waypoint records per query");
  col->add_option("--mode", co_mode, "disc | gen")->check(CLI::IsMember({"disc", "gen"}));
  col->add_option("--seed", co_seed, "Pipeline seed");
  col->add_option("--out", co_out, "Output JSONL")->required();
  col->add_option("--d-max", co_dmax, "Query length cap");
  col->add_option("--tol", co_tol, "Optimality tolerance for positive labels");

  // train
  auto* tr = app.add_subcommand("train", "Train a waypoint sampler on collected records");
  std::string tr_data, tr_envs, tr_robot, tr_model = "disc", tr_out;
  bool tr_global = false;
  int tr_epochs = 20, tr_batch = 64;
  double tr_lr = 1e-3;
  uint64_t tr_seed = 0;
  tr->add_option("--data", tr_data, "Training JSONL")->required();
  tr->add_option("--envs", tr_envs, "Environment directory the records reference")->required();
  tr->add_option("--robot", tr_robot, "Robot model JSON (default: built-in)");
  tr->add_option("--model", tr_model, "disc | gen")->check(CLI::IsMember({"disc", "gen"}));
  tr->add_flag("--global-conditioning", tr_global, "Condition on the whole map, not the window");
  tr->add_option("--epochs", tr_epochs, "Training epochs");
  tr->add_option("--lr", tr_lr, "Adam learning rate");
  tr->add_option("--batch", tr_batch, "Minibatch size");
  tr->add_option("--seed", tr_seed, "Training seed");
  tr->add_option("--out", tr_out, "Weights output (.nrpw)")->required();

  // bench
  auto* be = app.add_subcommand("bench", "Run a benchmark spec and write the CSV report");
  std::string be_spec, be_out;
  be->add_option("--spec", be_spec, "Benchmark spec JSON")->required();
  be->add_option("--out", be_out, "Report CSV")->required();

  // eval-sampler
  auto* ev = app.add_subcommand("eval-sampler", "Score sampler proposals against local oracles");
  std::string ev_weights, ev_data, ev_envs, ev_test, ev_out;
  int ev_ncand = 32;
  uint64_t ev_seed = 0, ev_eval_seed = 1;
  ev->add_option("--weights", ev_weights, "Sampler weights (.nrpw)")->required();
  ev->add_option("--data", ev_data, "Query source JSONL")->required();
  ev->add_option("--envs", ev_envs, "Environment directory")->required();
  ev->add_option("--test-envs", ev_test, "Comma separated held-out env ids");
  ev->add_option("--n-cand", ev_ncand, "Discriminative candidate count");
  ev->add_option("--seed", ev_seed, "Pipeline seed the records were collected with");
  ev->add_option("--eval-seed", ev_eval_seed, "Seed for the sampler draws");
  ev->add_option("--out", ev_out, "Scores JSON")->required();

  // plot
  auto* pt = app.add_subcommand("plot", "Render SVG curves from a report CSV");
  std::string pt_in, pt_out;
  pt->add_option("--in", pt_in, "Report CSV")->required();
  pt->add_option("--out-dir", pt_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_envs(ge_count, ge_seed, ge_out, ge_rooms, ge_dmin, ge_dmax, ge_extent,
                          ge_fmin, ge_fmax);
    if (rmc->parsed()) return cmd_roadmap(rm_env, rm_robot, rm_nodes, rm_seed, rm_out);
    if (plan->parsed())
      return cmd_plan(*plan, pl_env, pl_robot, pl_planner, pl_weights, pl_start, pl_goal, pl_time,
                      pl_exp, pl_seed, pl_out, pl_svg, pl_ncand, pl_sp, pl_gb);
    if (col->parsed())
      return cmd_collect(co_envs, co_robot, co_q, co_w, co_mode, co_seed, co_out, co_dmax, co_tol);
    if (tr->parsed())
      return cmd_train(tr_data, tr_envs, tr_robot, tr_model, tr_global, tr_epochs, tr_lr, tr_batch,
                       tr_seed, tr_out);
    if (be->parsed()) return cmd_bench(be_spec, be_out);
    if (ev->parsed())
      return cmd_eval_sampler(ev_weights, ev_data, ev_envs, ev_test, ev_ncand, ev_seed,
                              ev_eval_seed, ev_out);
    if (pt->parsed()) return cmd_plot(pt_in, pt_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
