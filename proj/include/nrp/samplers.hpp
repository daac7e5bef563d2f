#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nrp/cspace.hpp"
#include "nrp/nn.hpp"
#include "nrp/robot.hpp"
#include "nrp/world.hpp"

namespace nrp {

// Architecture descriptor persisted alongside the weights. `cfg_lo` and
// `cfg_hi` are the window-relative bounds a sampled waypoint must respect
// (positions within the window, joints within their limits), which also
// fix the normalization: positions scale by 2/window, angles by 1/pi.
struct ArchDesc {
  std::string model = "disc";  // "disc" or "gen"
  int dim = 5;                 // configuration dimension
  int grid = 40;               // network input side, cells
  int channels = 3;            // occupancy + normalized x + normalized y
  int conv1 = 8;
  int conv2 = 16;
  int fc = 256;
  int latent = 4;  // generative only
  bool global_conditioning = false;
  double window = 4.0;
  double resolution = 0.1;
  std::vector<double> cfg_lo, cfg_hi;

  int feat_dim() const {
    int side = grid / 4;
    return conv2 * side * side;
  }

  void check() const {
    if (model != "disc" && model != "gen")
      throw std::invalid_argument("arch: model must be disc or gen, got " + model);
    if (dim < 2) throw std::invalid_argument("arch: dim must be at least 2");
    if (grid <= 0 || grid % 4 != 0)
      throw std::invalid_argument("arch: grid side must be a positive multiple of 4");
    if (channels <= 0 || conv1 <= 0 || conv2 <= 0 || fc <= 0 || latent <= 0)
      throw std::invalid_argument("arch: layer sizes must be positive");
    if (window <= 0 || resolution <= 0)
      throw std::invalid_argument("arch: window and resolution must be positive");
    if (int(cfg_lo.size()) != dim || int(cfg_hi.size()) != dim)
      throw std::invalid_argument("arch: cfg bounds must match dim");
    for (int i = 0; i < dim; ++i)
      if (!(cfg_lo[i] < cfg_hi[i])) throw std::invalid_argument("arch: cfg_lo must be < cfg_hi");
  }
};

inline ArchDesc make_arch(const std::string& model_type, const SnakeModel& robot,
                          bool global_conditioning = false, double window = 4.0,
                          double resolution = 0.1) {
  ArchDesc a;
  a.model = model_type;
  a.dim = robot.config_dim();
  a.global_conditioning = global_conditioning;
  a.window = window;
  a.resolution = resolution;
  a.cfg_lo = {-window / 2, -window / 2};
  a.cfg_hi = {window / 2, window / 2};
  for (auto& [lo, hi] : robot.joint_limits) {
    a.cfg_lo.push_back(lo);
    a.cfg_hi.push_back(hi);
  }
  a.check();
  return a;
}

inline nlohmann::json arch_to_json(const ArchDesc& a) {
  return {{"model", a.model},
          {"dim", a.dim},
          {"grid", a.grid},
          {"channels", a.channels},
          {"conv1", a.conv1},
          {"conv2", a.conv2},
          {"fc", a.fc},
          {"latent", a.latent},
          {"global_conditioning", a.global_conditioning},
          {"window", a.window},
          {"resolution", a.resolution},
          {"cfg_lo", a.cfg_lo},
          {"cfg_hi", a.cfg_hi}};
}

inline ArchDesc arch_from_json(const nlohmann::json& j) {
  ArchDesc a;
  a.model = j.at("model").get<std::string>();
  a.dim = j.at("dim").get<int>();
  a.grid = j.at("grid").get<int>();
  a.channels = j.at("channels").get<int>();
  a.conv1 = j.at("conv1").get<int>();
  a.conv2 = j.at("conv2").get<int>();
  a.fc = j.at("fc").get<int>();
  a.latent = j.at("latent").get<int>();
  a.global_conditioning = j.at("global_conditioning").get<bool>();
  a.window = j.at("window").get<double>();
  a.resolution = j.at("resolution").get<double>();
  a.cfg_lo = j.at("cfg_lo").get<std::vector<double>>();
  a.cfg_hi = j.at("cfg_hi").get<std::vector<double>>();
  a.check();
  return a;
}

// ---------------------------------------------------------------------
// Input encodings

// Occupancy, normalized x, normalized y as arch.grid^2 planes. Local mode
// reads the window patch; global mode max-pools the whole environment
// down to the same shape, so both feed an identical network.
inline std::vector<double> encode_grid_channels(const ArchDesc& a, const LocalWindow& w,
                                                const OccupancyGrid* env) {
  int g = a.grid;
  std::vector<double> x(size_t(a.channels) * g * g);
  double* occ = x.data();
  double* nx = x.data() + size_t(g) * g;
  double* ny = x.data() + 2 * size_t(g) * g;
  if (a.global_conditioning) {
    if (!env)
      throw std::invalid_argument("encode_grid_channels: global conditioning needs the environment");
    for (int iy = 0; iy < g; ++iy) {
      int sy0 = iy * env->height / g, sy1 = (iy + 1) * env->height / g;
      for (int ix = 0; ix < g; ++ix) {
        int sx0 = ix * env->width / g, sx1 = (ix + 1) * env->width / g;
        double v = 0.0;
        for (int sy = sy0; sy < std::max(sy1, sy0 + 1) && v == 0.0; ++sy)
          for (int sx = sx0; sx < std::max(sx1, sx0 + 1); ++sx)
            if (env->occupied(sx, sy)) {
              v = 1.0;
              break;
            }
        occ[iy * g + ix] = v;
        nx[iy * g + ix] = (2.0 * ix + 1.0) / g - 1.0;
        ny[iy * g + ix] = (2.0 * iy + 1.0) / g - 1.0;
      }
    }
  } else {
    if (w.patch.width != g || w.patch.height != g)
      throw std::invalid_argument("encode_grid_channels: patch is " +
                                  std::to_string(w.patch.width) + "x" +
                                  std::to_string(w.patch.height) + ", network expects " +
                                  std::to_string(g) + "x" + std::to_string(g));
    for (int iy = 0; iy < g; ++iy)
      for (int ix = 0; ix < g; ++ix) {
        occ[iy * g + ix] = w.patch.at(ix, iy) ? 1.0 : 0.0;
        nx[iy * g + ix] = (2.0 * ix + 1.0) / g - 1.0;
        ny[iy * g + ix] = (2.0 * iy + 1.0) / g - 1.0;
      }
  }
  return x;
}

// Window-relative config -> normalized network inputs. Global mode uses
// environment-extent normalization of the absolute position instead, so
// positions stay meaningful when the grid input is the whole environment.
inline std::vector<double> encode_config(const ArchDesc& a, const Config& q_local,
                                         const LocalWindow& w, const OccupancyGrid* env) {
  if (int(q_local.size()) != a.dim)
    throw std::invalid_argument("encode_config: config has " + std::to_string(q_local.size()) +
                                " dims, network expects " + std::to_string(a.dim));
  std::vector<double> out(size_t(a.dim), 0.0);
  if (a.global_conditioning) {
    if (!env) throw std::invalid_argument("encode_config: global conditioning needs the environment");
    out[0] = 2.0 * (q_local[0] + w.center.x - env->origin_x) / (env->width * env->resolution) - 1.0;
    out[1] = 2.0 * (q_local[1] + w.center.y - env->origin_y) / (env->height * env->resolution) - 1.0;
  } else {
    out[0] = q_local[0] * 2.0 / a.window;
    out[1] = q_local[1] * 2.0 / a.window;
  }
  for (int i = 2; i < a.dim; ++i) out[i] = q_local[i] / kPi;
  return out;
}

// Inverse of encode_config for decoder outputs, back to window-relative.
inline Config decode_config(const ArchDesc& a, const std::vector<double>& y, const LocalWindow& w,
                            const OccupancyGrid* env) {
  Config q(size_t(a.dim), 0.0);
  if (a.global_conditioning) {
    if (!env) throw std::invalid_argument("decode_config: global conditioning needs the environment");
    q[0] = (y[0] + 1.0) * 0.5 * env->width * env->resolution + env->origin_x - w.center.x;
    q[1] = (y[1] + 1.0) * 0.5 * env->height * env->resolution + env->origin_y - w.center.y;
  } else {
    q[0] = y[0] * a.window / 2.0;
    q[1] = y[1] * a.window / 2.0;
  }
  for (int i = 2; i < a.dim; ++i) q[i] = y[i] * kPi;
  return q;
}

// ---------------------------------------------------------------------
// Networks

struct ConvTrunk {
  Conv2d c1, c2;
  Relu r1, r2;
  MaxPool2 p1, p2;
  int grid = 0;

  void init(const ArchDesc& a, Rng& rng) {
    grid = a.grid;
    c1.init(a.channels, a.conv1, rng);
    c2.init(a.conv1, a.conv2, rng);
  }

  int out_dim() const { return c2.out_ch() * (grid / 4) * (grid / 4); }

  std::vector<double> forward(const std::vector<double>& x, int n, bool keep = true) const {
    int g = grid;
    auto y = p1.forward(r1.forward(c1.forward(x, n, g, g, keep), keep), n, c1.out_ch(), g, g, keep);
    g /= 2;
    return p2.forward(r2.forward(c2.forward(y, n, g, g, keep), keep), n, c2.out_ch(), g, g, keep);
  }

  void backward(const std::vector<double>& gy) {
    c1.backward(r1.backward(p1.backward(c2.backward(r2.backward(p2.backward(gy))))));
  }

  void zero_grads() {
    for (Tensor* t : {&c1.gw, &c1.gb, &c2.gw, &c2.gb})
      std::fill(t->data.begin(), t->data.end(), 0.0);
  }
};

struct Mlp {
  Dense d1, d2, head;
  Relu r1, r2;

  void init(int in, int fc, int out, Rng& rng) {
    d1.init(in, fc, rng);
    d2.init(fc, fc, rng);
    head.init(fc, out, rng);
  }

  std::vector<double> forward(const std::vector<double>& x, int n, bool keep = true) const {
    return head.forward(r2.forward(d2.forward(r1.forward(d1.forward(x, n, keep), keep), n, keep), keep),
                        n, keep);
  }

  std::vector<double> backward(const std::vector<double>& gy) {
    return d1.backward(r1.backward(d2.backward(r2.backward(head.backward(gy)))));
  }

  void zero_grads() {
    for (Tensor* t : {&d1.gw, &d1.gb, &d2.gw, &d2.gb, &head.gw, &head.gb})
      std::fill(t->data.begin(), t->data.end(), 0.0);
  }
};

// Serialized form: the architecture plus a flat named-tensor map.
struct ModelParams {
  ArchDesc arch;
  std::map<std::string, Tensor> tensors;
};

namespace detail {

inline void put_tensor(std::map<std::string, Tensor>& m, const std::string& name, const Tensor& t) {
  m[name] = t;
}

inline Tensor take_tensor(const ModelParams& p, const std::string& name,
                          const std::vector<int>& shape) {
  auto it = p.tensors.find(name);
  if (it == p.tensors.end())
    throw std::runtime_error("model weights: missing tensor " + name);
  if (it->second.shape != shape) {
    std::string got, want;
    for (int d : it->second.shape) got += std::to_string(d) + " ";
    for (int d : shape) want += std::to_string(d) + " ";
    throw std::runtime_error("model weights: tensor " + name + " has shape [ " + got +
                             "], architecture expects [ " + want + "]");
  }
  return it->second;
}

inline void store_mlp(std::map<std::string, Tensor>& m, const std::string& prefix, const Mlp& mlp) {
  put_tensor(m, prefix + ".d1.w", mlp.d1.w);
  put_tensor(m, prefix + ".d1.b", mlp.d1.b);
  put_tensor(m, prefix + ".d2.w", mlp.d2.w);
  put_tensor(m, prefix + ".d2.b", mlp.d2.b);
  put_tensor(m, prefix + ".head.w", mlp.head.w);
  put_tensor(m, prefix + ".head.b", mlp.head.b);
}

inline void load_mlp(const ModelParams& p, const std::string& prefix, Mlp& mlp, int in, int fc,
                     int out) {
  mlp.d1.w = take_tensor(p, prefix + ".d1.w", {fc, in});
  mlp.d1.b = take_tensor(p, prefix + ".d1.b", {fc});
  mlp.d2.w = take_tensor(p, prefix + ".d2.w", {fc, fc});
  mlp.d2.b = take_tensor(p, prefix + ".d2.b", {fc});
  mlp.head.w = take_tensor(p, prefix + ".head.w", {out, fc});
  mlp.head.b = take_tensor(p, prefix + ".head.b", {out});
  mlp.d1.gw = Tensor::zeros({fc, in});
  mlp.d1.gb = Tensor::zeros({fc});
  mlp.d2.gw = Tensor::zeros({fc, fc});
  mlp.d2.gb = Tensor::zeros({fc});
  mlp.head.gw = Tensor::zeros({out, fc});
  mlp.head.gb = Tensor::zeros({out});
}

inline void store_trunk(std::map<std::string, Tensor>& m, const ConvTrunk& t) {
  put_tensor(m, "trunk.c1.w", t.c1.w);
  put_tensor(m, "trunk.c1.b", t.c1.b);
  put_tensor(m, "trunk.c2.w", t.c2.w);
  put_tensor(m, "trunk.c2.b", t.c2.b);
}

inline void load_trunk(const ModelParams& p, ConvTrunk& t) {
  const ArchDesc& a = p.arch;
  t.grid = a.grid;
  t.c1.w = take_tensor(p, "trunk.c1.w", {a.conv1, a.channels, 3, 3});
  t.c1.b = take_tensor(p, "trunk.c1.b", {a.conv1});
  t.c2.w = take_tensor(p, "trunk.c2.w", {a.conv2, a.conv1, 3, 3});
  t.c2.b = take_tensor(p, "trunk.c2.b", {a.conv2});
  t.c1.gw = Tensor::zeros({a.conv1, a.channels, 3, 3});
  t.c1.gb = Tensor::zeros({a.conv1});
  t.c2.gw = Tensor::zeros({a.conv2, a.conv1, 3, 3});
  t.c2.gb = Tensor::zeros({a.conv2});
}

}  // namespace detail

// Discriminative sampler network: trunk features concatenated with the
// normalized (start, goal, candidate) triple, through the MLP to one
// logit per row.
struct DiscModel {
  ArchDesc arch;
  ConvTrunk trunk;
  Mlp mlp;

  [[nodiscard]] static DiscModel init(const ArchDesc& a, uint64_t seed) {
    a.check();
    if (a.model != "disc") throw std::invalid_argument("DiscModel: arch.model must be disc");
    DiscModel m;
    m.arch = a;
    Rng rng(mix64(seed, 0xd15c));
    m.trunk.init(a, rng);
    m.mlp.init(a.feat_dim() + 3 * a.dim, a.fc, 1, rng);
    return m;
  }

  // patches: [n, channels, grid, grid]; cfgs: [n, 3*dim] normalized
  std::vector<double> forward(const std::vector<double>& patches, const std::vector<double>& cfgs,
                              int n, bool keep = true) const {
    auto feat = trunk.forward(patches, n, keep);
    int fd = trunk.out_dim(), cd = 3 * arch.dim;
    if (int(cfgs.size()) != n * cd) throw std::invalid_argument("DiscModel: config block mismatch");
    std::vector<double> x(size_t(n) * (fd + cd));
    for (int k = 0; k < n; ++k) {
      std::copy_n(feat.data() + size_t(k) * fd, fd, x.data() + size_t(k) * (fd + cd));
      std::copy_n(cfgs.data() + size_t(k) * cd, cd, x.data() + size_t(k) * (fd + cd) + fd);
    }
    return mlp.forward(x, n, keep);
  }

  void backward(const std::vector<double>& g_logits, int n) {
    auto gx = mlp.backward(g_logits);
    int fd = trunk.out_dim(), cd = 3 * arch.dim;
    std::vector<double> gf(size_t(n) * fd);
    for (int k = 0; k < n; ++k)
      std::copy_n(gx.data() + size_t(k) * (fd + cd), fd, gf.data() + size_t(k) * fd);
    trunk.backward(gf);
  }

  void zero_grads() {
    trunk.zero_grads();
    mlp.zero_grads();
  }

  std::vector<std::pair<Tensor*, Tensor*>> param_grads() {
    return {{&trunk.c1.w, &trunk.c1.gw}, {&trunk.c1.b, &trunk.c1.gb}, {&trunk.c2.w, &trunk.c2.gw},
            {&trunk.c2.b, &trunk.c2.gb}, {&mlp.d1.w, &mlp.d1.gw},     {&mlp.d1.b, &mlp.d1.gb},
            {&mlp.d2.w, &mlp.d2.gw},     {&mlp.d2.b, &mlp.d2.gb},     {&mlp.head.w, &mlp.head.gw},
            {&mlp.head.b, &mlp.head.gb}};
  }

  ModelParams to_params() const {
    ModelParams p;
    p.arch = arch;
    detail::store_trunk(p.tensors, trunk);
    detail::store_mlp(p.tensors, "mlp", mlp);
    return p;
  }

  static DiscModel from_params(const ModelParams& p) {
    p.arch.check();
    if (p.arch.model != "disc") throw std::runtime_error("DiscModel: weights are for " + p.arch.model);
    DiscModel m;
    m.arch = p.arch;
    detail::load_trunk(p, m.trunk);
    detail::load_mlp(p, "mlp", m.mlp, p.arch.feat_dim() + 3 * p.arch.dim, p.arch.fc, 1);
    return m;
  }
};

// Conditional VAE: one trunk produces the context features consumed by
// both heads, the encoder maps (context, waypoint) to (mu, log sigma^2)
// and the decoder maps (context, z) back to a normalized waypoint. Only
// the decoder runs at planning time.
struct GenModel {
  ArchDesc arch;
  ConvTrunk trunk;
  Mlp enc, dec;

  [[nodiscard]] static GenModel init(const ArchDesc& a, uint64_t seed) {
    a.check();
    if (a.model != "gen") throw std::invalid_argument("GenModel: arch.model must be gen");
    GenModel m;
    m.arch = a;
    Rng rng(mix64(seed, 0x9e4e));
    m.trunk.init(a, rng);
    m.enc.init(a.feat_dim() + 3 * a.dim, a.fc, 2 * a.latent, rng);
    m.dec.init(a.feat_dim() + 2 * a.dim + a.latent, a.fc, a.dim, rng);
    return m;
  }

  void zero_grads() {
    trunk.zero_grads();
    enc.zero_grads();
    dec.zero_grads();
  }

  std::vector<std::pair<Tensor*, Tensor*>> param_grads() {
    return {{&trunk.c1.w, &trunk.c1.gw}, {&trunk.c1.b, &trunk.c1.gb}, {&trunk.c2.w, &trunk.c2.gw},
            {&trunk.c2.b, &trunk.c2.gb}, {&enc.d1.w, &enc.d1.gw},     {&enc.d1.b, &enc.d1.gb},
            {&enc.d2.w, &enc.d2.gw},     {&enc.d2.b, &enc.d2.gb},     {&enc.head.w, &enc.head.gw},
            {&enc.head.b, &enc.head.gb}, {&dec.d1.w, &dec.d1.gw},     {&dec.d1.b, &dec.d1.gb},
            {&dec.d2.w, &dec.d2.gw},     {&dec.d2.b, &dec.d2.gb},     {&dec.head.w, &dec.head.gw},
            {&dec.head.b, &dec.head.gb}};
  }

  ModelParams to_params() const {
    ModelParams p;
    p.arch = arch;
    detail::store_trunk(p.tensors, trunk);
    detail::store_mlp(p.tensors, "enc", enc);
    detail::store_mlp(p.tensors, "dec", dec);
    return p;
  }

  static GenModel from_params(const ModelParams& p) {
    p.arch.check();
    if (p.arch.model != "gen") throw std::runtime_error("GenModel: weights are for " + p.arch.model);
    GenModel m;
    m.arch = p.arch;
    detail::load_trunk(p, m.trunk);
    detail::load_mlp(p, "enc", m.enc, p.arch.feat_dim() + 3 * p.arch.dim, p.arch.fc,
                     2 * p.arch.latent);
    detail::load_mlp(p, "dec", m.dec, p.arch.feat_dim() + 2 * p.arch.dim + p.arch.latent,
                     p.arch.fc, p.arch.dim);
    return m;
  }
};

// ---------------------------------------------------------------------
// Weights file

namespace detail {

inline void put_u32(std::ostream& f, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v), (unsigned char)(v >> 8), (unsigned char)(v >> 16),
                        (unsigned char)(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& f, const std::string& what) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("model weights: truncated while reading " + what);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

}  // namespace detail

inline constexpr uint32_t kWeightsVersion = 1;

// Layout: "NRPW", u32 version, u32 descriptor length + JSON bytes, then
// for each tensor: u32 name length + bytes, u32 rank, u32 dims, f32
// little-endian payload. Values are stored in f32, so a save/load round
// trip quantizes doubles to float precision.
inline void save_weights(const ModelParams& p, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_weights: cannot open " + path);
  f.write("NRPW", 4);
  detail::put_u32(f, kWeightsVersion);
  std::string desc = arch_to_json(p.arch).dump();
  detail::put_u32(f, uint32_t(desc.size()));
  f.write(desc.data(), std::streamsize(desc.size()));
  for (const auto& [name, t] : p.tensors) {
    detail::put_u32(f, uint32_t(name.size()));
    f.write(name.data(), std::streamsize(name.size()));
    detail::put_u32(f, uint32_t(t.shape.size()));
    for (int d : t.shape) detail::put_u32(f, uint32_t(d));
    std::vector<float> buf(t.data.begin(), t.data.end());
    static_assert(sizeof(float) == 4);
    if constexpr (std::endian::native == std::endian::big)
      for (float& v : buf) {
        uint32_t u;
        std::memcpy(&u, &v, 4);
        u = __builtin_bswap32(u);
        std::memcpy(&v, &u, 4);
      }
    f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * 4));
  }
  if (!f) throw std::runtime_error("save_weights: write failed for " + path);
}

inline ModelParams load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_weights: cannot open " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::string(magic, 4) != "NRPW")
    throw std::runtime_error("load_weights: " + path + " is not a weights file (bad magic)");
  uint32_t version = detail::get_u32(f, "version");
  if (version != kWeightsVersion)
    throw std::runtime_error("load_weights: unsupported version " + std::to_string(version));
  uint32_t dlen = detail::get_u32(f, "descriptor length");
  std::string desc(dlen, '\0');
  if (!f.read(desc.data(), dlen))
    throw std::runtime_error("load_weights: truncated architecture descriptor");
  ModelParams p;
  try {
    p.arch = arch_from_json(nlohmann::json::parse(desc));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_weights: malformed architecture descriptor: " +
                             std::string(e.what()));
  }
  while (f.peek() != EOF) {
    uint32_t nlen = detail::get_u32(f, "tensor name length");
    std::string name(nlen, '\0');
    if (!f.read(name.data(), nlen)) throw std::runtime_error("load_weights: truncated tensor name");
    uint32_t rank = detail::get_u32(f, "tensor rank");
    if (rank == 0 || rank > 8)
      throw std::runtime_error("load_weights: tensor " + name + " has implausible rank " +
                               std::to_string(rank));
    Tensor t;
    size_t count = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      uint32_t d = detail::get_u32(f, "tensor dims");
      t.shape.push_back(int(d));
      count *= d;
    }
    std::vector<float> buf(count);
    if (!f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(count * 4)))
      throw std::runtime_error("load_weights: truncated data for tensor " + name);
    if constexpr (std::endian::native == std::endian::big)
      for (float& v : buf) {
        uint32_t u;
        std::memcpy(&u, &v, 4);
        u = __builtin_bswap32(u);
        std::memcpy(&v, &u, 4);
      }
    t.data.assign(buf.begin(), buf.end());
    p.tensors[name] = std::move(t);
  }
  return p;
}

// ---------------------------------------------------------------------
// Inference

namespace detail {

inline std::vector<double> context_vector(const ArchDesc& a, const ConvTrunk& trunk,
                                          const LocalWindow& w, const Config& qs_local,
                                          const Config& qg_local, const OccupancyGrid* env) {
  auto patch = encode_grid_channels(a, w, env);
  auto feat = trunk.forward(patch, 1, false);
  auto qs = encode_config(a, qs_local, w, env);
  auto qg = encode_config(a, qg_local, w, env);
  feat.insert(feat.end(), qs.begin(), qs.end());
  feat.insert(feat.end(), qg.begin(), qg.end());
  return feat;  // [feat_dim + 2*dim]
}

}  // namespace detail

// Single-candidate scorer; the batch path below is what planners use.
inline double forward_f_opt(const DiscModel& m, const LocalWindow& w, const Config& qs_local,
                            const Config& qg_local, const Config& q_local,
                            const OccupancyGrid* env = nullptr) {
  auto x = detail::context_vector(m.arch, m.trunk, w, qs_local, qg_local, env);
  auto qc = encode_config(m.arch, q_local, w, env);
  x.insert(x.end(), qc.begin(), qc.end());
  return m.mlp.forward(x, 1, false)[0];
}

// Scores many candidates against one (window, start, goal) context. The
// trunk and the context's share of the first dense layer are evaluated
// once; each candidate only pays for its own columns of d1 plus the rest
// of the MLP.
struct DiscScorer {
  const DiscModel* m;
  std::vector<double> pre;  // d1 pre-activation from context columns
  int q_off;                // first d1 column belonging to the candidate
  const LocalWindow* w;
  const OccupancyGrid* env;

  DiscScorer(const DiscModel& model, const LocalWindow& window, const Config& qs_local,
             const Config& qg_local, const OccupancyGrid* environment = nullptr)
      : m(&model), w(&window), env(environment) {
    auto ctx = detail::context_vector(m->arch, m->trunk, *w, qs_local, qg_local, env);
    q_off = int(ctx.size());
    int fc = m->arch.fc;
    pre.assign(size_t(fc), 0.0);
    const Dense& d1 = m->mlp.d1;
    for (int o = 0; o < fc; ++o) {
      const double* wr = d1.w.data.data() + size_t(o) * d1.in_dim();
      double acc = d1.b.data[o];
      for (int i = 0; i < q_off; ++i) acc += wr[i] * ctx[i];
      pre[o] = acc;
    }
  }

  double logit(const Config& q_local) const {
    auto qc = encode_config(m->arch, q_local, *w, env);
    int fc = m->arch.fc;
    const Dense& d1 = m->mlp.d1;
    std::vector<double> h(size_t(fc), 0.0);
    for (int o = 0; o < fc; ++o) {
      const double* wr = d1.w.data.data() + size_t(o) * d1.in_dim() + q_off;
      double acc = pre[o];
      for (size_t i = 0; i < qc.size(); ++i) acc += wr[i] * qc[i];
      h[o] = acc > 0.0 ? acc : 0.0;
    }
    auto y = m->mlp.head.forward(
        m->mlp.r2.forward(m->mlp.d2.forward(h, 1, false), false), 1, false);
    return y[0];
  }
};

// Uniform candidate with base position anywhere in the window patch and
// the remaining dims inside the arch bounds, window-relative.
inline Config sample_window_candidate(const ArchDesc& a, const LocalWindow& w, Rng& rng) {
  Config q(size_t(a.dim), 0.0);
  q[0] = rng.uniform(w.patch.origin_x - w.center.x,
                     w.patch.origin_x + w.patch.width * w.patch.resolution - w.center.x);
  q[1] = rng.uniform(w.patch.origin_y - w.center.y,
                     w.patch.origin_y + w.patch.height * w.patch.resolution - w.center.y);
  for (int i = 2; i < a.dim; ++i) q[i] = rng.uniform(a.cfg_lo[i], a.cfg_hi[i]);
  return q;
}

struct ScoredCandidate {
  Config q;  // window-relative
  double logit = 0.0;
};

// Highest-scoring of n_cand uniform window candidates; ties go to the
// earliest draw. Inputs and output are window-relative.
inline Config sample_discriminative(const DiscModel& m, const LocalWindow& w,
                                    const Config& qs_local, const Config& qg_local, int n_cand,
                                    Rng& rng, const OccupancyGrid* env = nullptr,
                                    std::vector<ScoredCandidate>* scored = nullptr) {
  if (n_cand < 1) throw std::invalid_argument("sample_discriminative: n_cand must be at least 1");
  DiscScorer scorer(m, w, qs_local, qg_local, env);
  Config best;
  double best_logit = 0.0;
  for (int k = 0; k < n_cand; ++k) {
    Config q = sample_window_candidate(m.arch, w, rng);
    double l = scorer.logit(q);
    if (scored) scored->push_back({q, l});
    if (k == 0 || l > best_logit) {
      best = std::move(q);
      best_logit = l;
    }
  }
  return best;
}

// One decoder pass on a standard-normal latent, de-normalized and clamped
// to the window and joint bounds. Window-relative in and out.
inline Config sample_generative(const GenModel& m, const LocalWindow& w, const Config& qs_local,
                                const Config& qg_local, Rng& rng,
                                const OccupancyGrid* env = nullptr,
                                const std::vector<double>* fixed_z = nullptr) {
  auto x = detail::context_vector(m.arch, m.trunk, w, qs_local, qg_local, env);
  for (int i = 0; i < m.arch.latent; ++i)
    x.push_back(fixed_z ? (*fixed_z)[i] : rng.normal());
  auto y = m.dec.forward(x, 1, false);
  Config q = decode_config(m.arch, y, w, env);
  double x_lo = w.patch.origin_x - w.center.x;
  double y_lo = w.patch.origin_y - w.center.y;
  q[0] = std::clamp(q[0], x_lo, x_lo + w.patch.width * w.patch.resolution);
  q[1] = std::clamp(q[1], y_lo, y_lo + w.patch.height * w.patch.resolution);
  for (int i = 2; i < m.arch.dim; ++i) q[i] = std::clamp(q[i], m.arch.cfg_lo[i], m.arch.cfg_hi[i]);
  return q;
}

}  // namespace nrp
