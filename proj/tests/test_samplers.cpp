#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "nrp/samplers.hpp"
#include "nrp/training.hpp"
#include "test_util.hpp"

using namespace nrp;

namespace {

// Networks small enough that toy trainings finish in well under a second.
ArchDesc toy_arch(const std::string& model, int dim = 2) {
  ArchDesc a;
  a.model = model;
  a.dim = dim;
  a.grid = 8;
  a.conv1 = 4;
  a.conv2 = 4;
  a.fc = 32;
  a.latent = 2;
  a.window = 0.8;
  a.resolution = 0.1;
  a.cfg_lo = {-0.4, -0.4};
  a.cfg_hi = {0.4, 0.4};
  for (int i = 2; i < dim; ++i) {
    a.cfg_lo.push_back(-2.6);
    a.cfg_hi.push_back(2.6);
  }
  a.check();
  return a;
}

LocalWindow toy_window(const OccupancyGrid& env, const ArchDesc& a) {
  return extract_window(env, {4.0, 4.0}, a.window);
}

// A full-size window over generated clutter, for the realistic-shape tests.
struct FullScale {
  OccupancyGrid env;
  ArchDesc arch;
  LocalWindow w;
  Config qs, qg;
};

const FullScale& full_scale() {
  static const FullScale fs = [] {
    FullScale f;
    WorldGenParams wp;
    f.env = generate_env(wp, 3);
    f.arch = make_arch("disc", default_snake_model());
    f.w = extract_window(f.env, {4.0, 4.0}, f.arch.window);
    f.qs = {0.0, 0.0, 0.1, -0.2, 0.3};
    f.qg = {0.9, -0.6, 0.0, 0.4, -0.1};
    return f;
  }();
  return fs;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Window-relative toy records around the fixed window center (4, 4) of a
// free 8 m environment.
std::vector<SampleRecord> toy_disc_records(int n, uint64_t seed) {
  Rng rng(seed);
  std::vector<SampleRecord> out;
  for (int i = 0; i < n; ++i) {
    SampleRecord r;
    r.env = "toy";
    r.cx = r.cy = 4.0;
    r.qs = {0.0, 0.0};
    r.qg = {0.3, 0.0};
    r.wp = {rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
    r.label = r.wp[0] > 0.0 ? 1 : 0;  // linearly separable in the waypoint
    r.tau_len = 1.0;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SampleRecord> toy_cluster_records(int n, uint64_t seed, double spread = 0.02,
                                              double cx = 0.2, double cy = -0.1) {
  Rng rng(seed);
  std::vector<SampleRecord> out;
  for (int i = 0; i < n; ++i) {
    SampleRecord r;
    r.env = "toy";
    r.cx = r.cy = 4.0;
    r.qs = {0.0, 0.0};
    r.qg = {0.3, 0.0};
    r.wp = {cx + spread * rng.normal(), cy + spread * rng.normal()};
    r.label = 1;
    r.tau_len = 1.0;
    out.push_back(std::move(r));
  }
  return out;
}

std::map<std::string, OccupancyGrid> toy_envs() {
  return {{"toy", testutil::free_grid(80, 80)}};
}

}  // namespace

TEST(SamplersArch, JsonRoundTripPreservesEveryField) {
  ArchDesc a = make_arch("gen", default_snake_model(), true);
  a.fc = 512;
  a.latent = 6;
  ArchDesc b = arch_from_json(arch_to_json(a));
  EXPECT_EQ(b.model, a.model);
  EXPECT_EQ(b.dim, a.dim);
  EXPECT_EQ(b.grid, a.grid);
  EXPECT_EQ(b.channels, a.channels);
  EXPECT_EQ(b.conv1, a.conv1);
  EXPECT_EQ(b.conv2, a.conv2);
  EXPECT_EQ(b.fc, a.fc);
  EXPECT_EQ(b.latent, a.latent);
  EXPECT_EQ(b.global_conditioning, a.global_conditioning);
  EXPECT_EQ(b.window, a.window);
  EXPECT_EQ(b.resolution, a.resolution);
  EXPECT_EQ(b.cfg_lo, a.cfg_lo);
  EXPECT_EQ(b.cfg_hi, a.cfg_hi);
}

TEST(SamplersArch, InvalidDescriptorsAreRejected) {
  ArchDesc a = make_arch("disc", default_snake_model());
  a.grid = 41;
  EXPECT_THROW(a.check(), std::invalid_argument);
  a = make_arch("disc", default_snake_model());
  a.model = "transformer";
  EXPECT_THROW(a.check(), std::invalid_argument);
  a = make_arch("disc", default_snake_model());
  a.cfg_lo.pop_back();
  EXPECT_THROW(a.check(), std::invalid_argument);
}

TEST(SamplersForward, LogitIsBitForBitReproducible) {
  const FullScale& fs = full_scale();
  DiscModel m = DiscModel::init(fs.arch, 7);
  Config q = {0.5, 0.5, 0.0, 0.0, 0.0};
  double a = forward_f_opt(m, fs.w, fs.qs, fs.qg, q);
  double b = forward_f_opt(m, fs.w, fs.qs, fs.qg, q);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(std::isfinite(a));
}

TEST(SamplersForward, BatchPermutationLeavesEachLogitUnchanged) {
  ArchDesc arch = toy_arch("disc");
  DiscModel m = DiscModel::init(arch, 3);
  OccupancyGrid env = testutil::free_grid(80, 80);
  LocalWindow w = toy_window(env, arch);
  auto patch = encode_grid_channels(arch, w, nullptr);
  Rng rng(9);
  int n = 5;
  std::vector<double> patches, cfgs;
  for (int k = 0; k < n; ++k) {
    patches.insert(patches.end(), patch.begin(), patch.end());
    for (int i = 0; i < 3 * arch.dim; ++i) cfgs.push_back(rng.uniform(-1.0, 1.0));
  }
  auto base = m.forward(patches, cfgs, n, false);
  // reverse the batch and check entry k moved to slot n-1-k untouched
  std::vector<double> rp(patches.size()), rc(cfgs.size());
  size_t ps = patch.size(), cs = 3 * size_t(arch.dim);
  for (int k = 0; k < n; ++k) {
    std::copy_n(patches.data() + k * ps, ps, rp.data() + (n - 1 - k) * ps);
    std::copy_n(cfgs.data() + k * cs, cs, rc.data() + (n - 1 - k) * cs);
  }
  auto rev = m.forward(rp, rc, n, false);
  for (int k = 0; k < n; ++k) EXPECT_EQ(base[k], rev[n - 1 - k]);
}

TEST(SamplersForward, UntrainedLogitsAreFiniteAndTame) {
  const FullScale& fs = full_scale();
  DiscModel m = DiscModel::init(fs.arch, 21);
  Rng rng(4);
  double sum_abs = 0.0;
  int n = 20;
  for (int i = 0; i < n; ++i) {
    Config q = sample_window_candidate(fs.arch, fs.w, rng);
    double l = forward_f_opt(m, fs.w, fs.qs, fs.qg, q);
    ASSERT_TRUE(std::isfinite(l));
    sum_abs += std::abs(l);
  }
  EXPECT_LT(sum_abs / n, 10.0);
}

TEST(SamplersForward, ShapeMismatchesAreRejected) {
  const FullScale& fs = full_scale();
  DiscModel m = DiscModel::init(fs.arch, 7);
  // a 2 m window yields a 20x20 patch, not the 40x40 the network expects
  LocalWindow small = extract_window(fs.env, {4.0, 4.0}, 2.0);
  EXPECT_THROW(forward_f_opt(m, small, fs.qs, fs.qg, fs.qs), std::invalid_argument);
  Config short_q = {0.0, 0.0};
  EXPECT_THROW(forward_f_opt(m, fs.w, fs.qs, fs.qg, short_q), std::invalid_argument);
}

TEST(SamplersForward, GlobalConditioningRequiresTheEnvironment) {
  ArchDesc arch = make_arch("disc", default_snake_model(), true);
  const FullScale& fs = full_scale();
  DiscModel m = DiscModel::init(arch, 7);
  EXPECT_THROW(forward_f_opt(m, fs.w, fs.qs, fs.qg, fs.qs), std::invalid_argument);
  double l = forward_f_opt(m, fs.w, fs.qs, fs.qg, fs.qs, &fs.env);
  EXPECT_TRUE(std::isfinite(l));
}

TEST(SamplersScorer, FastPathMatchesTheNaiveForward) {
  const FullScale& fs = full_scale();
  DiscModel m = DiscModel::init(fs.arch, 11);
  DiscScorer scorer(m, fs.w, fs.qs, fs.qg);
  Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    Config q = sample_window_candidate(fs.arch, fs.w, rng);
    EXPECT_NEAR(scorer.logit(q), forward_f_opt(m, fs.w, fs.qs, fs.qg, q), 1e-9);
  }
}

TEST(SamplersDisc, SingleCandidateIsReturnedAsIs) {
  const FullScale& fs = full_scale();
  DiscModel m = DiscModel::init(fs.arch, 11);
  Rng draw(42), replay(42);
  Config got = sample_discriminative(m, fs.w, fs.qs, fs.qg, 1, draw);
  Config expected = sample_window_candidate(fs.arch, fs.w, replay);
  EXPECT_EQ(got, expected);
}

TEST(SamplersDisc, ConstantNetworkFallsBackToTheFirstCandidate) {
  const FullScale& fs = full_scale();
  DiscModel m = DiscModel::init(fs.arch, 11);
  std::fill(m.mlp.head.w.data.begin(), m.mlp.head.w.data.end(), 0.0);
  std::fill(m.mlp.head.b.data.begin(), m.mlp.head.b.data.end(), 0.0);
  Rng draw(7), replay(7);
  std::vector<ScoredCandidate> scored;
  Config got = sample_discriminative(m, fs.w, fs.qs, fs.qg, 16, draw, nullptr, &scored);
  Config first = sample_window_candidate(fs.arch, fs.w, replay);
  EXPECT_EQ(got, first);
  ASSERT_EQ(scored.size(), 16u);
  for (const ScoredCandidate& c : scored) EXPECT_EQ(c.logit, 0.0);
}

TEST(SamplersDisc, ReturnedCandidateHasTheHighestLogit) {
  const FullScale& fs = full_scale();
  DiscModel m = DiscModel::init(fs.arch, 29);
  Rng rng(99);
  std::vector<ScoredCandidate> scored;
  Config got = sample_discriminative(m, fs.w, fs.qs, fs.qg, 64, rng, nullptr, &scored);
  ASSERT_EQ(scored.size(), 64u);
  size_t best = 0;
  for (size_t i = 1; i < scored.size(); ++i)
    if (scored[i].logit > scored[best].logit) best = i;
  EXPECT_EQ(got, scored[best].q);
  for (const ScoredCandidate& c : scored) EXPECT_LE(c.logit, scored[best].logit);
}

TEST(SamplersDisc, ZeroCandidatesIsAnError) {
  const FullScale& fs = full_scale();
  DiscModel m = DiscModel::init(fs.arch, 11);
  Rng rng(1);
  EXPECT_THROW(sample_discriminative(m, fs.w, fs.qs, fs.qg, 0, rng), std::invalid_argument);
}

TEST(SamplersGen, FixedLatentAndContextIsDeterministic) {
  ArchDesc arch = make_arch("gen", default_snake_model());
  const FullScale& fs = full_scale();
  GenModel m = GenModel::init(arch, 5);
  std::vector<double> z = {0.3, -1.1, 0.0, 2.0};
  Rng unused1(1), unused2(2);
  Config a = sample_generative(m, fs.w, fs.qs, fs.qg, unused1, nullptr, &z);
  Config b = sample_generative(m, fs.w, fs.qs, fs.qg, unused2, nullptr, &z);
  EXPECT_EQ(a, b);
}

TEST(SamplersGen, DrawsStayInsideWindowAndJointBounds) {
  ArchDesc arch = toy_arch("gen", 5);
  OccupancyGrid env = testutil::free_grid(80, 80);
  // window butting against the environment corner, so part of the patch
  // covers out-of-bounds space
  LocalWindow w = extract_window(env, {0.3, 0.3}, arch.window);
  GenModel m = GenModel::init(arch, 77);
  // crank the decoder head so raw outputs routinely exceed the bounds
  for (double& v : m.dec.head.w.data) v *= 50.0;
  Config qs(5, 0.0), qg(5, 0.1);
  Rng rng(8);
  double x_lo = w.patch.origin_x - w.center.x;
  double y_lo = w.patch.origin_y - w.center.y;
  double span = w.patch.width * w.patch.resolution;
  bool clamped = false;
  for (int i = 0; i < 10000; ++i) {
    Config q = sample_generative(m, w, qs, qg, rng);
    ASSERT_GE(q[0], x_lo);
    ASSERT_LE(q[0], x_lo + span);
    ASSERT_GE(q[1], y_lo);
    ASSERT_LE(q[1], y_lo + span);
    for (int j = 2; j < 5; ++j) {
      ASSERT_GE(q[j], arch.cfg_lo[j]);
      ASSERT_LE(q[j], arch.cfg_hi[j]);
    }
    if (q[0] == x_lo || q[0] == x_lo + span || q[2] == arch.cfg_lo[2] || q[2] == arch.cfg_hi[2])
      clamped = true;
  }
  EXPECT_TRUE(clamped) << "test never exercised the clamp";
}

TEST(SamplersIo, WeightsSurviveASaveLoadRoundTripAtFloatPrecision) {
  const FullScale& fs = full_scale();
  DiscModel m = DiscModel::init(fs.arch, 19);
  std::string path = temp_path("nrp_weights_roundtrip.nrpw");
  save_weights(m.to_params(), path);
  ModelParams loaded = load_weights(path);
  DiscModel m2 = DiscModel::from_params(loaded);
  EXPECT_EQ(loaded.tensors.size(), m.to_params().tensors.size());
  for (const auto& [name, t] : m.to_params().tensors) {
    const Tensor& u = loaded.tensors.at(name);
    ASSERT_EQ(u.shape, t.shape);
    for (size_t i = 0; i < t.data.size(); ++i)
      ASSERT_NEAR(u.data[i], t.data[i], 1e-6 * std::max(1.0, std::abs(t.data[i])));
  }
  Config q = {0.5, -0.5, 0.1, 0.0, -0.1};
  EXPECT_NEAR(forward_f_opt(m, fs.w, fs.qs, fs.qg, q), forward_f_opt(m2, fs.w, fs.qs, fs.qg, q),
              1e-3);
  std::remove(path.c_str());
}

TEST(SamplersIo, GenerativeWeightsRoundTrip) {
  ArchDesc arch = toy_arch("gen", 5);
  GenModel m = GenModel::init(arch, 23);
  std::string path = temp_path("nrp_weights_gen.nrpw");
  save_weights(m.to_params(), path);
  GenModel m2 = GenModel::from_params(load_weights(path));
  OccupancyGrid env = testutil::free_grid(80, 80);
  LocalWindow w = toy_window(env, arch);
  std::vector<double> z = {0.5, -0.5};
  Config qs(5, 0.0), qg(5, 0.1);
  Rng r1(1), r2(1);
  Config a = sample_generative(m, w, qs, qg, r1, nullptr, &z);
  Config b = sample_generative(m2, w, qs, qg, r2, nullptr, &z);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-4);
  std::remove(path.c_str());
}

TEST(SamplersIo, CorruptWeightFilesAreRejectedWithClearErrors) {
  DiscModel m = DiscModel::init(toy_arch("disc"), 3);
  std::string path = temp_path("nrp_weights_corrupt.nrpw");
  save_weights(m.to_params(), path);

  auto expect_load_error = [&](const std::string& p, const std::string& needle) {
    try {
      load_weights(p);
      FAIL() << "expected load_weights to reject " << p;
    } catch (const std::runtime_error& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };

  std::string data;
  {
    std::ifstream f(path, std::ios::binary);
    data.assign(std::istreambuf_iterator<char>(f), {});
  }
  std::string bad = temp_path("nrp_weights_bad.nrpw");

  {
    std::string d = data;
    d[0] = 'X';
    std::ofstream(bad, std::ios::binary).write(d.data(), std::streamsize(d.size()));
    expect_load_error(bad, "magic");
  }
  {
    std::string d = data;
    d[4] = 99;  // version field
    std::ofstream(bad, std::ios::binary).write(d.data(), std::streamsize(d.size()));
    expect_load_error(bad, "version");
  }
  {
    std::string d = data.substr(0, data.size() / 2);
    std::ofstream(bad, std::ios::binary).write(d.data(), std::streamsize(d.size()));
    expect_load_error(bad, "truncated");
  }

  ModelParams p = load_weights(path);
  p.tensors.erase("mlp.d2.w");
  EXPECT_THROW(
      {
        try {
          DiscModel::from_params(p);
        } catch (const std::runtime_error& e) {
          EXPECT_NE(std::string(e.what()).find("mlp.d2.w"), std::string::npos);
          throw;
        }
      },
      std::runtime_error);

  p = load_weights(path);
  p.tensors["mlp.d1.b"] = Tensor::zeros({3});
  EXPECT_THROW(DiscModel::from_params(p), std::runtime_error);

  p = load_weights(path);
  p.arch.model = "gen";
  EXPECT_THROW(DiscModel::from_params(p), std::runtime_error);

  std::remove(path.c_str());
  std::remove(bad.c_str());
}

TEST(SamplersConcurrency, ParallelInferenceMatchesSequential) {
  const FullScale& fs = full_scale();
  DiscModel m = DiscModel::init(fs.arch, 31);
  Rng rng(2);
  std::vector<Config> qs;
  for (int i = 0; i < 16; ++i) qs.push_back(sample_window_candidate(fs.arch, fs.w, rng));
  std::vector<double> sequential;
  for (const Config& q : qs) sequential.push_back(forward_f_opt(m, fs.w, fs.qs, fs.qg, q));

  std::vector<double> lo(8), hi(8);
  const DiscModel& cm = m;
  std::thread a([&] {
    for (int i = 0; i < 8; ++i) lo[i] = forward_f_opt(cm, fs.w, fs.qs, fs.qg, qs[i]);
  });
  std::thread b([&] {
    for (int i = 0; i < 8; ++i) hi[i] = forward_f_opt(cm, fs.w, fs.qs, fs.qg, qs[8 + i]);
  });
  a.join();
  b.join();
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(lo[i], sequential[i]);
    EXPECT_EQ(hi[i], sequential[8 + i]);
  }
}

// ---------------------------------------------------------------------
// Training

namespace {

double fd_loss_rel_err(double analytic, double numeric) {
  double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

TEST(TrainingDisc, EndToEndGradientMatchesFiniteDifferences) {
  ArchDesc arch = toy_arch("disc");
  arch.grid = 4;
  arch.conv1 = 2;
  arch.conv2 = 2;
  arch.fc = 6;
  DiscModel m = DiscModel::init(arch, 2);
  Rng rng(5);
  int n = 3;
  std::vector<double> patches(size_t(n) * arch.channels * arch.grid * arch.grid);
  for (double& v : patches) v = rng.uniform(-1.0, 1.0);
  std::vector<double> cfgs(size_t(n) * 3 * arch.dim);
  for (double& v : cfgs) v = rng.uniform(-1.0, 1.0);
  std::vector<double> labels = {1.0, 0.0, 1.0};

  m.zero_grads();
  auto lg = bce_with_logits(m.forward(patches, cfgs, n, true), labels);
  m.backward(lg.grad, n);

  auto loss_at = [&] { return bce_with_logits(m.forward(patches, cfgs, n, false), labels).loss; };
  double h = 1e-4;
  for (auto [param, grad] : m.param_grads()) {
    size_t sz = param->data.size();
    for (size_t i : {size_t(0), sz / 3, 2 * sz / 3, sz - 1}) {
      double saved = param->data[i];
      param->data[i] = saved + h;
      double up = loss_at();
      param->data[i] = saved - h;
      double dn = loss_at();
      param->data[i] = saved;
      EXPECT_LT(fd_loss_rel_err(grad->data[i], (up - dn) / (2 * h)), 1e-4);
    }
  }
}

TEST(TrainingGen, EndToEndGradientMatchesFiniteDifferences) {
  ArchDesc arch = toy_arch("gen");
  arch.grid = 4;
  arch.conv1 = 2;
  arch.conv2 = 2;
  arch.fc = 6;
  GenModel m = GenModel::init(arch, 6);
  Rng rng(15);
  int n = 2;
  std::vector<double> patches(size_t(n) * arch.channels * arch.grid * arch.grid);
  for (double& v : patches) v = rng.uniform(-1.0, 1.0);
  std::vector<double> ctx(size_t(n) * 2 * arch.dim), target(size_t(n) * arch.dim);
  for (double& v : ctx) v = rng.uniform(-1.0, 1.0);
  for (double& v : target) v = rng.uniform(-1.0, 1.0);
  std::vector<double> eps(size_t(n) * arch.latent);
  for (double& v : eps) v = rng.normal();

  m.zero_grads();
  auto step = nrp::detail::gen_forward(m, patches, ctx, target, n, eps, 0.7, true);
  nrp::detail::gen_backward(m, step, n);

  auto loss_at = [&] {
    return nrp::detail::gen_forward(m, patches, ctx, target, n, eps, 0.7, false).elbo.loss;
  };
  double h = 1e-4;
  for (auto [param, grad] : m.param_grads()) {
    size_t sz = param->data.size();
    for (size_t i : {size_t(0), sz / 3, 2 * sz / 3, sz - 1}) {
      double saved = param->data[i];
      param->data[i] = saved + h;
      double up = loss_at();
      param->data[i] = saved - h;
      double dn = loss_at();
      param->data[i] = saved;
      EXPECT_LT(fd_loss_rel_err(grad->data[i], (up - dn) / (2 * h)), 1e-4);
    }
  }
}

TEST(TrainingDisc, SeparableToyTaskReachesHighValidationAccuracy) {
  ArchDesc arch = toy_arch("disc");
  auto records = toy_disc_records(240, 31);
  auto envs = toy_envs();
  TrainConfig tc;
  tc.epochs = 50;
  tc.batch = 32;
  tc.lr = 1e-3;
  tc.seed = 4;
  auto result = train_discriminative(records, envs, arch, tc);
  EXPECT_EQ(int(result.report.epochs.size()), tc.epochs);

  DiscModel m = DiscModel::from_params(result.params);
  OccupancyGrid env = envs.at("toy");
  LocalWindow w = toy_window(env, arch);
  auto held_out = toy_disc_records(80, 777);
  int correct = 0;
  for (const SampleRecord& r : held_out) {
    double logit = forward_f_opt(m, w, r.qs, r.qg, r.wp);
    correct += (logit > 0.0) == (r.label == 1);
  }
  EXPECT_GE(correct, 76) << "validation accuracy " << correct << "/80";
}

TEST(TrainingDisc, ZeroLearningRateIsANoOp) {
  ArchDesc arch = toy_arch("disc");
  auto records = toy_disc_records(40, 31);
  auto envs = toy_envs();
  TrainConfig tc;
  tc.lr = 0.0;
  tc.seed = 9;
  tc.epochs = 1;
  auto one = train_discriminative(records, envs, arch, tc);
  tc.epochs = 4;
  auto four = train_discriminative(records, envs, arch, tc);
  EXPECT_EQ(one.params.tensors.size(), four.params.tensors.size());
  for (const auto& [name, t] : one.params.tensors)
    EXPECT_EQ(t.data, four.params.tensors.at(name).data) << name;

  tc.lr = 1e-3;
  auto moved = train_discriminative(records, envs, arch, tc);
  EXPECT_NE(moved.params.tensors.at("mlp.head.w").data, one.params.tensors.at("mlp.head.w").data);
}

TEST(TrainingDisc, EmptyDatasetIsAnError) {
  auto envs = toy_envs();
  EXPECT_THROW(train_discriminative({}, envs, toy_arch("disc"), TrainConfig{}),
               std::invalid_argument);
}

TEST(TrainingDisc, ReportTracksPerEpochLosses) {
  ArchDesc arch = toy_arch("disc");
  auto records = toy_disc_records(100, 31);
  auto envs = toy_envs();
  TrainConfig tc;
  tc.epochs = 5;
  tc.seed = 2;
  std::ostringstream log;
  auto result = train_discriminative(records, envs, arch, tc, &log);
  ASSERT_EQ(result.report.epochs.size(), 5u);
  for (const EpochStats& s : result.report.epochs) {
    EXPECT_TRUE(std::isfinite(s.train_loss));
    EXPECT_TRUE(std::isfinite(s.val_loss));
  }
  EXPECT_EQ(result.report.final_val_loss, result.report.epochs.back().val_loss);
  EXPECT_EQ(result.report.train_count + result.report.val_count, 100);
  EXPECT_NE(log.str().find("epoch 4"), std::string::npos);
  // learning should actually reduce the training loss on this easy task
  EXPECT_LT(result.report.epochs.back().train_loss, result.report.epochs.front().train_loss);
}

TEST(TrainingGen, SingleClusterDecoderMeanLandsOnTheCenter) {
  ArchDesc arch = toy_arch("gen");
  auto records = toy_cluster_records(200, 51);
  auto envs = toy_envs();
  TrainConfig tc;
  tc.epochs = 60;
  tc.batch = 32;
  tc.lr = 1e-3;
  tc.seed = 6;
  auto result = train_generative(records, envs, arch, tc);
  GenModel m = GenModel::from_params(result.params);

  OccupancyGrid env = envs.at("toy");
  LocalWindow w = toy_window(env, arch);
  Config qs = {0.0, 0.0}, qg = {0.3, 0.0};
  Rng rng(123);
  double mx = 0.0, my = 0.0;
  int n = 200;
  for (int i = 0; i < n; ++i) {
    Config q = sample_generative(m, w, qs, qg, rng);
    mx += q[0] / n;
    my += q[1] / n;
  }
  // compare in normalized units (the decoder's output space)
  EXPECT_LT(std::abs(mx - 0.2) / (arch.window / 2), 0.1) << "mean x " << mx;
  EXPECT_LT(std::abs(my + 0.1) / (arch.window / 2), 0.1) << "mean y " << my;
}

TEST(TrainingGen, HeldOutSamplesAutoencodeThroughTheMeanLatent) {
  ArchDesc arch = toy_arch("gen");
  // wide cluster plus a small KL weight, so reconstructing each sample is
  // worth paying for information through the latent (a unit KL weight on
  // near-pointlike data makes ignoring z the optimum, by design)
  auto records = toy_cluster_records(200, 51, 0.09, 0.1, -0.1);
  auto envs = toy_envs();
  TrainConfig tc;
  tc.epochs = 250;
  tc.batch = 32;
  tc.lr = 2e-3;
  tc.seed = 6;
  tc.beta_kl = 0.0005;
  auto result = train_generative(records, envs, arch, tc);
  GenModel m = GenModel::from_params(result.params);

  auto held_out = toy_cluster_records(30, 888, 0.09, 0.1, -0.1);
  nrp::detail::EncodedRecords enc(arch, held_out, envs);
  std::vector<double> zero_eps(size_t(arch.latent), 0.0);
  int close = 0;
  for (size_t i = 0; i < held_out.size(); ++i) {
    std::vector<int> idx = {int(i)};
    auto step = nrp::detail::gen_forward(m, enc.patches(idx), enc.cfg_block(idx, 0, 2 * arch.dim),
                                         enc.cfg_block(idx, 2 * arch.dim, arch.dim), 1, zero_eps,
                                         1.0, false);
    double worst = 0.0;
    auto target = enc.cfg_block(idx, 2 * arch.dim, arch.dim);
    for (int d = 0; d < arch.dim; ++d)
      worst = std::max(worst, std::abs(step.recon[d] - target[d]));
    if (worst < 0.1) ++close;
  }
  EXPECT_GE(close, 27) << "only " << close << "/30 held-out samples reconstruct within 0.1";
}

TEST(TrainingGen, TrainedEncoderKlIsFiniteAndPositive) {
  ArchDesc arch = toy_arch("gen");
  auto records = toy_cluster_records(80, 51);
  auto envs = toy_envs();
  TrainConfig tc;
  tc.epochs = 20;
  tc.seed = 3;
  auto result = train_generative(records, envs, arch, tc);
  GenModel m = GenModel::from_params(result.params);

  nrp::detail::EncodedRecords enc(arch, records, envs);
  std::vector<int> idx = {0, 1, 2, 3};
  std::vector<double> eps(idx.size() * size_t(arch.latent), 0.0);
  auto step = nrp::detail::gen_forward(m, enc.patches(idx), enc.cfg_block(idx, 0, 2 * arch.dim),
                                       enc.cfg_block(idx, 2 * arch.dim, arch.dim), int(idx.size()),
                                       eps, 1.0, false);
  EXPECT_TRUE(std::isfinite(step.elbo.kl));
  EXPECT_GT(step.elbo.kl, 0.0);
}

TEST(TrainingGen, SeedsMakeTrainingReproducible) {
  ArchDesc arch = toy_arch("gen");
  auto records = toy_cluster_records(60, 51);
  auto envs = toy_envs();
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 14;
  auto a = train_generative(records, envs, arch, tc);
  auto b = train_generative(records, envs, arch, tc);
  for (const auto& [name, t] : a.params.tensors)
    EXPECT_EQ(t.data, b.params.tensors.at(name).data) << name;
  EXPECT_EQ(a.report.final_val_loss, b.report.final_val_loss);
}

TEST(TrainingGen, DatasetWithoutPositivesIsAnError) {
  auto records = toy_disc_records(20, 1);
  for (SampleRecord& r : records) r.label = 0;
  auto envs = toy_envs();
  EXPECT_THROW(train_generative(records, envs, toy_arch("gen"), TrainConfig{}),
               std::invalid_argument);
}
