#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nrp/rng.hpp"
#include "nrp/tensor.hpp"

namespace nrp {

// Layers hold their parameters, their gradient accumulators and the
// forward-pass caches the backward pass needs. Batches are flat row-major
// buffers with the batch index outermost; every backward call accumulates
// into the gradient tensors, so callers zero them once per minibatch.
//
// forward(..., keep = false) writes nothing at all, which is what makes
// concurrent read-only inference on a shared model safe; keep = true is
// for the single-threaded training loop only.

inline void he_init(Tensor& w, int fan_in, Rng& rng) {
  double s = std::sqrt(2.0 / fan_in);
  for (double& v : w.data) v = rng.normal() * s;
}

struct Dense {
  Tensor w, b, gw, gb;  // w: [out, in]
  mutable std::vector<double> in_cache;
  mutable int n_cache = 0;

  void init(int in, int out, Rng& rng) {
    w = Tensor::zeros({out, in});
    b = Tensor::zeros({out});
    gw = Tensor::zeros({out, in});
    gb = Tensor::zeros({out});
    he_init(w, in, rng);
  }

  int in_dim() const { return w.shape[1]; }
  int out_dim() const { return w.shape[0]; }

  std::vector<double> forward(const std::vector<double>& x, int n, bool keep = true) const {
    int in = in_dim(), out = out_dim();
    if (int(x.size()) != n * in) throw std::invalid_argument("dense: input size mismatch");
    if (keep) {
      in_cache = x;
      n_cache = n;
    }
    std::vector<double> y(size_t(n) * out);
    for (int k = 0; k < n; ++k) {
      const double* xr = x.data() + size_t(k) * in;
      double* yr = y.data() + size_t(k) * out;
      for (int o = 0; o < out; ++o) {
        const double* wr = w.data.data() + size_t(o) * in;
        double acc = b.data[o];
        for (int i = 0; i < in; ++i) acc += wr[i] * xr[i];
        yr[o] = acc;
      }
    }
    return y;
  }

  std::vector<double> backward(const std::vector<double>& gy) {
    int in = in_dim(), out = out_dim(), n = n_cache;
    if (int(gy.size()) != n * out) throw std::invalid_argument("dense: gradient size mismatch");
    std::vector<double> gx(size_t(n) * in, 0.0);
    for (int k = 0; k < n; ++k) {
      const double* xr = in_cache.data() + size_t(k) * in;
      const double* gr = gy.data() + size_t(k) * out;
      double* gxr = gx.data() + size_t(k) * in;
      for (int o = 0; o < out; ++o) {
        double g = gr[o];
        gb.data[o] += g;
        const double* wr = w.data.data() + size_t(o) * in;
        double* gwr = gw.data.data() + size_t(o) * in;
        for (int i = 0; i < in; ++i) {
          gwr[i] += g * xr[i];
          gxr[i] += g * wr[i];
        }
      }
    }
    return gx;
  }
};

struct Relu {
  mutable std::vector<uint8_t> mask;

  std::vector<double> forward(std::vector<double> x, bool keep = true) const {
    if (keep) {
      mask.resize(x.size());
      for (size_t i = 0; i < x.size(); ++i) mask[i] = x[i] > 0.0;
    }
    for (double& v : x)
      if (v <= 0.0) v = 0.0;
    return x;
  }

  std::vector<double> backward(std::vector<double> gy) const {
    if (gy.size() != mask.size()) throw std::invalid_argument("relu: gradient size mismatch");
    for (size_t i = 0; i < gy.size(); ++i)
      if (!mask[i]) gy[i] = 0.0;
    return gy;
  }
};

// 3x3 convolution, stride 1, zero padding 1: spatial size is preserved.
struct Conv2d {
  Tensor w, b, gw, gb;  // w: [out_c, in_c, 3, 3]
  mutable std::vector<double> in_cache;
  mutable int n_cache = 0, h_cache = 0, w_cache = 0;

  void init(int in_c, int out_c, Rng& rng) {
    w = Tensor::zeros({out_c, in_c, 3, 3});
    b = Tensor::zeros({out_c});
    gw = Tensor::zeros({out_c, in_c, 3, 3});
    gb = Tensor::zeros({out_c});
    he_init(w, in_c * 9, rng);
  }

  int in_ch() const { return w.shape[1]; }
  int out_ch() const { return w.shape[0]; }

  std::vector<double> forward(const std::vector<double>& x, int n, int h, int wd,
                              bool keep = true) const {
    int ic = in_ch(), oc = out_ch();
    if (int(x.size()) != n * ic * h * wd) throw std::invalid_argument("conv2d: input size mismatch");
    if (keep) {
      in_cache = x;
      n_cache = n;
      h_cache = h;
      w_cache = wd;
    }
    std::vector<double> y(size_t(n) * oc * h * wd);
    for (int k = 0; k < n; ++k)
      for (int o = 0; o < oc; ++o) {
        double* yp = y.data() + ((size_t(k) * oc + o) * h) * wd;
        for (int i = 0; i < h * wd; ++i) yp[i] = b.data[o];
        for (int c = 0; c < ic; ++c) {
          const double* xp = x.data() + ((size_t(k) * ic + c) * h) * wd;
          const double* wp = w.data.data() + (size_t(o) * ic + c) * 9;
          for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj) {
              double wv = wp[(di + 1) * 3 + (dj + 1)];
              int i0 = std::max(0, -di), i1 = std::min(h, h - di);
              int j0 = std::max(0, -dj), j1 = std::min(wd, wd - dj);
              for (int i = i0; i < i1; ++i) {
                const double* xr = xp + size_t(i + di) * wd + dj;
                double* yr = yp + size_t(i) * wd;
                for (int j = j0; j < j1; ++j) yr[j] += wv * xr[j];
              }
            }
        }
      }
    return y;
  }

  std::vector<double> backward(const std::vector<double>& gy) {
    int ic = in_ch(), oc = out_ch(), n = n_cache, h = h_cache, wd = w_cache;
    if (int(gy.size()) != n * oc * h * wd) throw std::invalid_argument("conv2d: gradient size mismatch");
    std::vector<double> gx(in_cache.size(), 0.0);
    for (int k = 0; k < n; ++k)
      for (int o = 0; o < oc; ++o) {
        const double* gp = gy.data() + ((size_t(k) * oc + o) * h) * wd;
        for (int i = 0; i < h * wd; ++i) gb.data[o] += gp[i];
        for (int c = 0; c < ic; ++c) {
          const double* xp = in_cache.data() + ((size_t(k) * ic + c) * h) * wd;
          double* gxp = gx.data() + ((size_t(k) * ic + c) * h) * wd;
          const double* wp = w.data.data() + (size_t(o) * ic + c) * 9;
          double* gwp = gw.data.data() + (size_t(o) * ic + c) * 9;
          for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj) {
              double wv = wp[(di + 1) * 3 + (dj + 1)];
              double acc = 0.0;
              int i0 = std::max(0, -di), i1 = std::min(h, h - di);
              int j0 = std::max(0, -dj), j1 = std::min(wd, wd - dj);
              for (int i = i0; i < i1; ++i) {
                const double* xr = xp + size_t(i + di) * wd + dj;
                double* gxr = gxp + size_t(i + di) * wd + dj;
                const double* gr = gp + size_t(i) * wd;
                for (int j = j0; j < j1; ++j) {
                  acc += xr[j] * gr[j];
                  gxr[j] += wv * gr[j];
                }
              }
              gwp[(di + 1) * 3 + (dj + 1)] += acc;
            }
        }
      }
    return gx;
  }
};

// 2x2 max pooling, stride 2. Ties route the gradient to the first maximal
// cell in row-major order, so backward is a function of forward's choice.
struct MaxPool2 {
  mutable std::vector<int> argmax;
  mutable int n_cache = 0, c_cache = 0, h_cache = 0, w_cache = 0;

  std::vector<double> forward(const std::vector<double>& x, int n, int c, int h, int wd,
                              bool keep = true) const {
    if (h % 2 || wd % 2) throw std::invalid_argument("maxpool2: odd spatial size");
    if (int(x.size()) != n * c * h * wd) throw std::invalid_argument("maxpool2: input size mismatch");
    int oh = h / 2, ow = wd / 2;
    std::vector<double> y(size_t(n) * c * oh * ow);
    if (keep) {
      argmax.resize(y.size());
      n_cache = n;
      c_cache = c;
      h_cache = h;
      w_cache = wd;
    }
    for (int k = 0; k < n * c; ++k) {
      const double* xp = x.data() + size_t(k) * h * wd;
      double* yp = y.data() + size_t(k) * oh * ow;
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          int base = 2 * i * wd + 2 * j;
          int best = base;
          double bv = xp[base];
          for (int d : {1, wd, wd + 1}) {
            if (xp[base + d] > bv) {
              bv = xp[base + d];
              best = base + d;
            }
          }
          yp[i * ow + j] = bv;
          if (keep) argmax[size_t(k) * oh * ow + i * ow + j] = best;
        }
    }
    return y;
  }

  std::vector<double> backward(const std::vector<double>& gy) const {
    int oh = h_cache / 2, ow = w_cache / 2;
    if (int(gy.size()) != n_cache * c_cache * oh * ow)
      throw std::invalid_argument("maxpool2: gradient size mismatch");
    std::vector<double> gx(size_t(n_cache) * c_cache * h_cache * w_cache, 0.0);
    for (int k = 0; k < n_cache * c_cache; ++k) {
      const double* gp = gy.data() + size_t(k) * oh * ow;
      double* gxp = gx.data() + size_t(k) * h_cache * w_cache;
      for (int i = 0; i < oh * ow; ++i) gxp[argmax[size_t(k) * oh * ow + i]] += gp[i];
    }
    return gx;
  }
};

// Mean binary cross-entropy straight from logits. The max/log1p form
// never exponentiates a positive argument, so logits of any magnitude
// stay finite.
struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

inline LossGrad bce_with_logits(const std::vector<double>& logits,
                                const std::vector<double>& labels) {
  if (logits.size() != labels.size() || logits.empty())
    throw std::invalid_argument("bce_with_logits: batch size mismatch or empty");
  LossGrad out;
  out.grad.resize(logits.size());
  double inv_n = 1.0 / double(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    double x = logits[i], y = labels[i];
    out.loss += (std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)))) * inv_n;
    out.grad[i] = (1.0 / (1.0 + std::exp(-x)) - y) * inv_n;
  }
  return out;
}

// Negative evidence lower bound for a unit-variance Gaussian decoder:
// 0.5*sum-squared reconstruction error plus beta times the KL divergence
// from the encoder posterior N(mu, sigma^2) to N(0, I), both averaged
// over the batch.
struct ElboResult {
  double loss = 0.0, recon = 0.0, kl = 0.0;
  std::vector<double> g_recon, g_mu, g_logvar;
};

inline ElboResult elbo_loss(const std::vector<double>& recon, const std::vector<double>& target,
                            const std::vector<double>& mu, const std::vector<double>& log_var,
                            int n, double beta = 1.0) {
  if (recon.size() != target.size() || mu.size() != log_var.size() || n <= 0)
    throw std::invalid_argument("elbo_loss: size mismatch");
  ElboResult out;
  out.g_recon.resize(recon.size());
  out.g_mu.resize(mu.size());
  out.g_logvar.resize(mu.size());
  double inv_n = 1.0 / n;
  for (size_t i = 0; i < recon.size(); ++i) {
    double d = recon[i] - target[i];
    out.recon += 0.5 * d * d * inv_n;
    out.g_recon[i] = d * inv_n;
  }
  for (size_t i = 0; i < mu.size(); ++i) {
    double m = mu[i], lv = log_var[i], var = std::exp(lv);
    out.kl += 0.5 * (m * m + var - lv - 1.0) * inv_n;
    out.g_mu[i] = beta * m * inv_n;
    out.g_logvar[i] = beta * 0.5 * (var - 1.0) * inv_n;
  }
  out.loss = out.recon + beta * out.kl;
  return out;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  long t = 0;
};

inline void adam_step(Tensor& param, const Tensor& grad, AdamState& s, const AdamConfig& c) {
  if (param.size() != grad.size()) throw std::invalid_argument("adam_step: param/grad size mismatch");
  if (s.m.empty()) {
    s.m.assign(param.size(), 0.0);
    s.v.assign(param.size(), 0.0);
  }
  if (s.m.size() != param.size()) throw std::invalid_argument("adam_step: stale state size");
  ++s.t;
  double bc1 = 1.0 - std::pow(c.beta1, double(s.t));
  double bc2 = 1.0 - std::pow(c.beta2, double(s.t));
  for (size_t i = 0; i < param.size(); ++i) {
    double g = grad.data[i];
    s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * g;
    s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * g * g;
    param.data[i] -= c.lr * (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + c.eps);
  }
}

}  // namespace nrp
