#pragma once

#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "nrp/dataset.hpp"
#include "nrp/samplers.hpp"

namespace nrp {

struct TrainConfig {
  double lr = 1e-3;
  int batch = 64;
  int epochs = 20;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double beta_kl = 1.0;       // ELBO KL weight
  double val_fraction = 0.1;  // tail of the shuffled records
  uint64_t seed = 0;

  void check() const {
    if (lr < 0) throw std::invalid_argument("train: lr must be nonnegative");
    if (batch <= 0 || epochs <= 0) throw std::invalid_argument("train: batch and epochs must be positive");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
      throw std::invalid_argument("train: betas must be in (0, 1)");
    if (eps <= 0) throw std::invalid_argument("train: eps must be positive");
    if (val_fraction < 0 || val_fraction >= 1)
      throw std::invalid_argument("train: val_fraction must be in [0, 1)");
  }
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double final_val_loss = 0.0;
  int train_count = 0;
  int val_count = 0;
};

namespace detail {

// Network inputs for a set of records, encoded once up front. Occupancy
// planes are cached as bytes (they are exactly {0,1}); the coordinate
// planes are identical across records, so one copy serves the whole set.
struct EncodedRecords {
  int g = 0, dim = 0;
  std::vector<std::vector<uint8_t>> occ;  // per record, g*g
  std::vector<double> xy;                 // 2 planes, g*g each
  std::vector<double> cfg;                // per record: qs~, qg~, wp~ (3*dim)
  std::vector<double> label;

  EncodedRecords(const ArchDesc& a, const std::vector<SampleRecord>& records,
                 const std::map<std::string, OccupancyGrid>& envs) {
    g = a.grid;
    dim = a.dim;
    occ.reserve(records.size());
    cfg.reserve(records.size() * 3 * size_t(dim));
    label.reserve(records.size());
    for (const SampleRecord& r : records) {
      auto it = envs.find(r.env);
      if (it == envs.end()) throw std::runtime_error("train: record references unknown env " + r.env);
      const OccupancyGrid* env = &it->second;
      LocalWindow w = extract_window(*env, {r.cx, r.cy}, a.window);
      auto x = encode_grid_channels(a, w, env);
      if (xy.empty()) xy.assign(x.begin() + size_t(g) * g, x.end());
      std::vector<uint8_t> o(size_t(g) * g);
      for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] != 0.0;
      occ.push_back(std::move(o));
      for (const Config* q : {&r.qs, &r.qg, &r.wp}) {
        auto e = encode_config(a, *q, w, env);
        cfg.insert(cfg.end(), e.begin(), e.end());
      }
      label.push_back(double(r.label));
    }
  }

  size_t size() const { return occ.size(); }

  // [n, 3, g, g] batch tensor for the given record indices
  std::vector<double> patches(const std::vector<int>& idx) const {
    size_t plane = size_t(g) * g;
    std::vector<double> out(idx.size() * 3 * plane);
    for (size_t k = 0; k < idx.size(); ++k) {
      double* row = out.data() + k * 3 * plane;
      const std::vector<uint8_t>& o = occ[idx[k]];
      for (size_t i = 0; i < plane; ++i) row[i] = o[i];
      std::copy(xy.begin(), xy.end(), row + plane);
    }
    return out;
  }

  // columns of the per-record config block: qs,qg = first 2*dim, wp = last
  std::vector<double> cfg_block(const std::vector<int>& idx, int off, int len) const {
    std::vector<double> out(idx.size() * size_t(len));
    for (size_t k = 0; k < idx.size(); ++k)
      std::copy_n(cfg.data() + size_t(idx[k]) * 3 * dim + off, len, out.data() + k * len);
    return out;
  }

  std::vector<double> labels(const std::vector<int>& idx) const {
    std::vector<double> out(idx.size());
    for (size_t k = 0; k < idx.size(); ++k) out[k] = label[idx[k]];
    return out;
  }
};

inline std::pair<std::vector<int>, std::vector<int>> split_indices(size_t n, double val_fraction,
                                                                   Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
  size_t val = size_t(double(n) * val_fraction);
  std::vector<int> train(idx.begin(), idx.end() - val);
  std::vector<int> vals(idx.end() - val, idx.end());
  return {train, vals};
}

inline void log_epoch(std::ostream* log, int epoch, const EpochStats& s) {
  if (log)
    *log << "epoch " << epoch << " train_loss " << s.train_loss << " val_loss " << s.val_loss
         << "\n";
}

}  // namespace detail

struct DiscTrainResult {
  ModelParams params;
  TrainReport report;
};

// Minibatch Adam on binary cross-entropy over (context, waypoint, label)
// records. The validation split is the shuffled tail; with too few
// records for a split, validation falls back to the training set so the
// reported loss is always defined.
inline DiscTrainResult train_discriminative(const std::vector<SampleRecord>& records,
                                            const std::map<std::string, OccupancyGrid>& envs,
                                            const ArchDesc& arch, const TrainConfig& tc,
                                            std::ostream* log = nullptr) {
  tc.check();
  arch.check();
  if (arch.model != "disc") throw std::invalid_argument("train_discriminative: arch.model must be disc");
  if (records.empty()) throw std::invalid_argument("train_discriminative: empty dataset");
  detail::EncodedRecords enc(arch, records, envs);
  Rng rng(mix64(tc.seed, 0x7d15c));
  auto [train_idx, val_idx] = detail::split_indices(enc.size(), tc.val_fraction, rng);
  if (val_idx.empty()) val_idx = train_idx;

  DiscModel model = DiscModel::init(arch, mix64(tc.seed, 0x1717));
  auto pg = model.param_grads();
  std::vector<AdamState> adam(pg.size());
  AdamConfig ac{tc.lr, tc.beta1, tc.beta2, tc.eps};

  auto eval = [&](const std::vector<int>& idx) {
    double loss = 0.0;
    for (size_t at = 0; at < idx.size(); at += size_t(tc.batch)) {
      std::vector<int> b(idx.begin() + at,
                         idx.begin() + std::min(at + size_t(tc.batch), idx.size()));
      auto logits = model.forward(enc.patches(b), enc.cfg_block(b, 0, 3 * arch.dim), int(b.size()),
                                  false);
      loss += bce_with_logits(logits, enc.labels(b)).loss * double(b.size());
    }
    return loss / double(idx.size());
  };

  TrainReport report;
  report.train_count = int(train_idx.size());
  report.val_count = int(val_idx.size());
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    for (size_t i = train_idx.size(); i > 1; --i)
      std::swap(train_idx[i - 1], train_idx[rng.index(i)]);
    double train_loss = 0.0;
    for (size_t at = 0; at < train_idx.size(); at += size_t(tc.batch)) {
      std::vector<int> b(train_idx.begin() + at,
                         train_idx.begin() + std::min(at + size_t(tc.batch), train_idx.size()));
      int n = int(b.size());
      auto logits = model.forward(enc.patches(b), enc.cfg_block(b, 0, 3 * arch.dim), n, true);
      auto lg = bce_with_logits(logits, enc.labels(b));
      train_loss += lg.loss * n;
      model.zero_grads();
      model.backward(lg.grad, n);
      for (size_t t = 0; t < pg.size(); ++t) adam_step(*pg[t].first, *pg[t].second, adam[t], ac);
    }
    EpochStats s{train_loss / double(train_idx.size()), eval(val_idx)};
    detail::log_epoch(log, epoch, s);
    report.epochs.push_back(s);
  }
  report.final_val_loss = report.epochs.back().val_loss;
  return {model.to_params(), report};
}

namespace detail {

// One CVAE forward/backward on a batch with the latent noise supplied by
// the caller, so gradients are checkable against finite differences.
struct GenStep {
  ElboResult elbo;
  std::vector<double> mu, log_var, z, recon;
};

inline GenStep gen_forward(const GenModel& m, const std::vector<double>& patches,
                           const std::vector<double>& ctx, const std::vector<double>& target,
                           int n, const std::vector<double>& eps_z, double beta_kl, bool keep) {
  int fd = m.arch.feat_dim(), d = m.arch.dim, L = m.arch.latent;
  auto feat = m.trunk.forward(patches, n, keep);
  std::vector<double> enc_in(size_t(n) * (fd + 3 * d));
  for (int k = 0; k < n; ++k) {
    double* row = enc_in.data() + size_t(k) * (fd + 3 * d);
    std::copy_n(feat.data() + size_t(k) * fd, fd, row);
    std::copy_n(ctx.data() + size_t(k) * 2 * d, 2 * d, row + fd);
    std::copy_n(target.data() + size_t(k) * d, d, row + fd + 2 * d);
  }
  auto enc_out = m.enc.forward(enc_in, n, keep);
  GenStep s;
  s.mu.resize(size_t(n) * L);
  s.log_var.resize(size_t(n) * L);
  s.z.resize(size_t(n) * L);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < L; ++i) {
      double mu = enc_out[size_t(k) * 2 * L + i];
      double lv = enc_out[size_t(k) * 2 * L + L + i];
      s.mu[size_t(k) * L + i] = mu;
      s.log_var[size_t(k) * L + i] = lv;
      s.z[size_t(k) * L + i] = mu + std::exp(0.5 * lv) * eps_z[size_t(k) * L + i];
    }
  std::vector<double> dec_in(size_t(n) * (fd + 2 * d + L));
  for (int k = 0; k < n; ++k) {
    double* row = dec_in.data() + size_t(k) * (fd + 2 * d + L);
    std::copy_n(feat.data() + size_t(k) * fd, fd, row);
    std::copy_n(ctx.data() + size_t(k) * 2 * d, 2 * d, row + fd);
    std::copy_n(s.z.data() + size_t(k) * L, L, row + fd + 2 * d);
  }
  s.recon = m.dec.forward(dec_in, n, keep);
  s.elbo = elbo_loss(s.recon, target, s.mu, s.log_var, n, beta_kl);
  return s;
}

inline void gen_backward(GenModel& m, const GenStep& s, int n) {
  int fd = m.arch.feat_dim(), d = m.arch.dim, L = m.arch.latent;
  auto g_dec_in = m.dec.backward(s.elbo.g_recon);
  std::vector<double> g_enc_out(size_t(n) * 2 * L);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < L; ++i) {
      double gz = g_dec_in[size_t(k) * (fd + 2 * d + L) + fd + 2 * d + i];
      size_t at = size_t(k) * L + i;
      // z = mu + exp(lv/2)*eps, so dz/dmu = 1 and dz/dlv = (z - mu)/2
      g_enc_out[size_t(k) * 2 * L + i] = s.elbo.g_mu[at] + gz;
      g_enc_out[size_t(k) * 2 * L + L + i] =
          s.elbo.g_logvar[at] + gz * 0.5 * (s.z[at] - s.mu[at]);
    }
  auto g_enc_in = m.enc.backward(g_enc_out);
  std::vector<double> g_feat(size_t(n) * fd);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < fd; ++i)
      g_feat[size_t(k) * fd + i] = g_enc_in[size_t(k) * (fd + 3 * d) + i] +
                                   g_dec_in[size_t(k) * (fd + 2 * d + L) + i];
  m.trunk.backward(g_feat);
}

}  // namespace detail

struct GenTrainResult {
  ModelParams params;
  TrainReport report;
};

// Minibatch Adam on the negative ELBO with the reparameterization trick,
// fitted to the optimal-labeled records only. The decoder is what
// planning uses; the encoder is persisted too for diagnostics.
inline GenTrainResult train_generative(const std::vector<SampleRecord>& all_records,
                                       const std::map<std::string, OccupancyGrid>& envs,
                                       const ArchDesc& arch, const TrainConfig& tc,
                                       std::ostream* log = nullptr) {
  tc.check();
  arch.check();
  if (arch.model != "gen") throw std::invalid_argument("train_generative: arch.model must be gen");
  std::vector<SampleRecord> records;
  for (const SampleRecord& r : all_records)
    if (r.label == 1) records.push_back(r);
  if (records.empty())
    throw std::invalid_argument("train_generative: no optimal-labeled records in the dataset");
  detail::EncodedRecords enc(arch, records, envs);
  Rng rng(mix64(tc.seed, 0x69e4));
  auto [train_idx, val_idx] = detail::split_indices(enc.size(), tc.val_fraction, rng);
  if (val_idx.empty()) val_idx = train_idx;

  GenModel model = GenModel::init(arch, mix64(tc.seed, 0x1718));
  auto pg = model.param_grads();
  std::vector<AdamState> adam(pg.size());
  AdamConfig ac{tc.lr, tc.beta1, tc.beta2, tc.eps};
  int L = arch.latent, d = arch.dim;

  auto run_split = [&](const std::vector<int>& idx, bool update, double& loss_out) {
    double loss = 0.0;
    for (size_t at = 0; at < idx.size(); at += size_t(tc.batch)) {
      std::vector<int> b(idx.begin() + at,
                         idx.begin() + std::min(at + size_t(tc.batch), idx.size()));
      int n = int(b.size());
      std::vector<double> eps_z(size_t(n) * L);
      for (double& e : eps_z) e = rng.normal();
      auto step = detail::gen_forward(model, enc.patches(b), enc.cfg_block(b, 0, 2 * d),
                                      enc.cfg_block(b, 2 * d, d), n, eps_z, tc.beta_kl, update);
      loss += step.elbo.loss * n;
      if (update) {
        model.zero_grads();
        detail::gen_backward(model, step, n);
        for (size_t t = 0; t < pg.size(); ++t) adam_step(*pg[t].first, *pg[t].second, adam[t], ac);
      }
    }
    loss_out = loss / double(idx.size());
  };

  TrainReport report;
  report.train_count = int(train_idx.size());
  report.val_count = int(val_idx.size());
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    for (size_t i = train_idx.size(); i > 1; --i)
      std::swap(train_idx[i - 1], train_idx[rng.index(i)]);
    EpochStats s;
    run_split(train_idx, true, s.train_loss);
    run_split(val_idx, false, s.val_loss);
    detail::log_epoch(log, epoch, s);
    report.epochs.push_back(s);
  }
  report.final_val_loss = report.epochs.back().val_loss;
  return {model.to_params(), report};
}

}  // namespace nrp
