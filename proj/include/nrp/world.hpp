#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nrp/rng.hpp"

namespace nrp {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Row-major occupancy raster. Cell (ix, iy) covers the metric square
// [origin + ix*res, origin + (ix+1)*res) x [...iy...); anything outside
// the raster reads as occupied.
struct OccupancyGrid {
  int width = 0;
  int height = 0;
  double resolution = 0.1;
  double origin_x = 0.0;
  double origin_y = 0.0;
  std::vector<uint8_t> cells;  // 1 = occupied

  bool in_bounds(int ix, int iy) const {
    return ix >= 0 && iy >= 0 && ix < width && iy < height;
  }
  uint8_t& at(int ix, int iy) { return cells[size_t(iy) * width + ix]; }
  uint8_t at(int ix, int iy) const { return cells[size_t(iy) * width + ix]; }

  bool occupied(int ix, int iy) const {
    if (!in_bounds(ix, iy)) return true;
    return at(ix, iy) != 0;
  }

  int cell_x(double x) const { return int(std::floor((x - origin_x) / resolution)); }
  int cell_y(double y) const { return int(std::floor((y - origin_y) / resolution)); }
  bool occupied_at(double x, double y) const { return occupied(cell_x(x), cell_y(y)); }

  double min_x() const { return origin_x; }
  double min_y() const { return origin_y; }
  double max_x() const { return origin_x + width * resolution; }
  double max_y() const { return origin_y + height * resolution; }
};

struct WorldGenParams {
  double extent_x = 8.0;
  double extent_y = 8.0;
  double resolution = 0.1;
  int room_rows = 2;
  int room_cols = 2;
  double doorway_min = 0.5;    // meters
  double doorway_max = 0.9;
  int furniture_min = 2;
  int furniture_max = 6;
  double furniture_size_min = 0.3;
  double furniture_size_max = 1.0;
  double wall_thickness = 0.1;
};

struct LocalWindow {
  Vec2 center;
  double size = 4.0;
  OccupancyGrid patch;  // patch origin is snapped to the source lattice
};

namespace detail {

// number of cells spanned by a metric length, robust against the usual
// extent/resolution being inexact in binary
inline int cell_count(double span, double resolution) {
  double k = span / resolution;
  double r = std::round(k);
  if (std::abs(k - r) < 1e-6) return std::max(1, int(r));
  return std::max(1, int(std::ceil(k)));
}

inline bool free_cells_connected(const OccupancyGrid& g) {
  int total = 0, start = -1;
  for (int i = 0; i < g.width * g.height; ++i) {
    if (g.cells[i] == 0) {
      ++total;
      if (start < 0) start = i;
    }
  }
  if (total == 0) return false;
  std::vector<uint8_t> seen(g.cells.size(), 0);
  std::queue<int> q;
  q.push(start);
  seen[start] = 1;
  int reached = 1;
  while (!q.empty()) {
    int c = q.front();
    q.pop();
    int ix = c % g.width, iy = c / g.width;
    const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      int nx = ix + dx[k], ny = iy + dy[k];
      if (!g.in_bounds(nx, ny)) continue;
      int n = ny * g.width + nx;
      if (seen[n] || g.cells[n]) continue;
      seen[n] = 1;
      ++reached;
      q.push(n);
    }
  }
  return reached == total;
}

inline void fill_rect_cells(OccupancyGrid& g, int x0, int y0, int x1, int y1, uint8_t v) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, g.width - 1);
  y1 = std::min(y1, g.height - 1);
  for (int iy = y0; iy <= y1; ++iy)
    for (int ix = x0; ix <= x1; ++ix) g.at(ix, iy) = v;
}

}  // namespace detail

// Procedural room-and-doorway world. Rooms form a rows x cols lattice,
// each shared wall gets exactly one doorway, furniture rectangles are
// rejected whenever they would disconnect the free space.
inline OccupancyGrid generate_env(const WorldGenParams& p, uint64_t seed) {
  if (p.room_rows < 1 || p.room_cols < 1) throw std::invalid_argument("generate_env: room grid must be at least 1x1");
  if (p.doorway_min > p.doorway_max) throw std::invalid_argument("generate_env: doorway_min > doorway_max");
  OccupancyGrid g;
  g.resolution = p.resolution;
  g.width = detail::cell_count(p.extent_x, p.resolution);
  g.height = detail::cell_count(p.extent_y, p.resolution);
  g.cells.assign(size_t(g.width) * g.height, 0);
  Rng rng(mix64(seed, 0x9c0a7e5d));

  int wt = detail::cell_count(p.wall_thickness, p.resolution);

  // boundary
  detail::fill_rect_cells(g, 0, 0, g.width - 1, wt - 1, 1);
  detail::fill_rect_cells(g, 0, g.height - wt, g.width - 1, g.height - 1, 1);
  detail::fill_rect_cells(g, 0, 0, wt - 1, g.height - 1, 1);
  detail::fill_rect_cells(g, g.width - wt, 0, g.width - 1, g.height - 1, 1);

  // interior wall bands; band i sits at the lattice line between slots i-1 and i
  std::vector<int> vx(p.room_cols + 1), hy(p.room_rows + 1);
  for (int c = 0; c <= p.room_cols; ++c) vx[c] = int(std::llround(double(c) * g.width / p.room_cols));
  for (int r = 0; r <= p.room_rows; ++r) hy[r] = int(std::llround(double(r) * g.height / p.room_rows));
  for (int c = 1; c < p.room_cols; ++c)
    detail::fill_rect_cells(g, vx[c] - wt / 2, 0, vx[c] - wt / 2 + wt - 1, g.height - 1, 1);
  for (int r = 1; r < p.room_rows; ++r)
    detail::fill_rect_cells(g, 0, hy[r] - wt / 2, g.width - 1, hy[r] - wt / 2 + wt - 1, 1);

  // one doorway per shared wall segment
  auto doorway_cells = [&]() {
    double w = rng.uniform(p.doorway_min, p.doorway_max);
    return std::max(3, detail::cell_count(w, p.resolution));
  };
  for (int c = 1; c < p.room_cols; ++c) {
    for (int r = 0; r < p.room_rows; ++r) {
      int seg0 = hy[r] + wt, seg1 = hy[r + 1] - wt - 1;  // stay clear of crossing walls
      int dw = doorway_cells();
      int lo = seg0 + 1, hi = seg1 - dw;  // leave at least one wall cell at corners
      if (hi < lo) { lo = seg0; hi = std::max(seg0, seg1 - dw + 1); }
      int y0 = lo + int(rng.index(uint64_t(hi - lo + 1)));
      detail::fill_rect_cells(g, vx[c] - wt / 2, y0, vx[c] - wt / 2 + wt - 1, y0 + dw - 1, 0);
    }
  }
  for (int r = 1; r < p.room_rows; ++r) {
    for (int c = 0; c < p.room_cols; ++c) {
      int seg0 = vx[c] + wt, seg1 = vx[c + 1] - wt - 1;
      int dw = doorway_cells();
      int lo = seg0 + 1, hi = seg1 - dw;
      if (hi < lo) { lo = seg0; hi = std::max(seg0, seg1 - dw + 1); }
      int x0 = lo + int(rng.index(uint64_t(hi - lo + 1)));
      detail::fill_rect_cells(g, x0, hy[r] - wt / 2, x0 + dw - 1, hy[r] - wt / 2 + wt - 1, 0);
    }
  }

  // axis-aligned furniture, rejected if it would split the free space
  int count = p.furniture_min + (p.furniture_max > p.furniture_min
                                     ? int(rng.index(uint64_t(p.furniture_max - p.furniture_min + 1)))
                                     : 0);
  for (int i = 0; i < count; ++i) {
    for (int attempt = 0; attempt < 25; ++attempt) {
      double fw = rng.uniform(p.furniture_size_min, p.furniture_size_max);
      double fh = rng.uniform(p.furniture_size_min, p.furniture_size_max);
      int cw = detail::cell_count(fw, p.resolution), ch = detail::cell_count(fh, p.resolution);
      if (cw >= g.width - 2 * wt || ch >= g.height - 2 * wt) continue;
      int x0 = wt + int(rng.index(uint64_t(g.width - 2 * wt - cw + 1)));
      int y0 = wt + int(rng.index(uint64_t(g.height - 2 * wt - ch + 1)));
      std::vector<std::pair<int, uint8_t>> undo;
      for (int iy = y0; iy < y0 + ch; ++iy)
        for (int ix = x0; ix < x0 + cw; ++ix) {
          int idx = iy * g.width + ix;
          undo.emplace_back(idx, g.cells[idx]);
          g.cells[idx] = 1;
        }
      if (detail::free_cells_connected(g)) break;
      for (auto& [idx, v] : undo) g.cells[idx] = v;
    }
  }

  if (!detail::free_cells_connected(g)) throw std::runtime_error("generate_env: free space disconnected");
  return g;
}

// Square window of the source grid centered (up to lattice snapping) at
// `center`. Patch cells mirror source cells one-to-one; parts of the
// window hanging off the source grid read as occupied.
inline LocalWindow extract_window(const OccupancyGrid& g, Vec2 center, double size) {
  if (size <= 0) throw std::invalid_argument("extract_window: size must be positive");
  LocalWindow w;
  w.center = center;
  w.size = size;
  int side = detail::cell_count(size, g.resolution);
  double half = side * g.resolution / 2.0;
  int ix0 = int(std::llround((center.x - half - g.origin_x) / g.resolution));
  int iy0 = int(std::llround((center.y - half - g.origin_y) / g.resolution));
  w.patch.width = w.patch.height = side;
  w.patch.resolution = g.resolution;
  w.patch.origin_x = g.origin_x + ix0 * g.resolution;
  w.patch.origin_y = g.origin_y + iy0 * g.resolution;
  w.patch.cells.assign(size_t(side) * side, 0);
  for (int iy = 0; iy < side; ++iy)
    for (int ix = 0; ix < side; ++ix)
      w.patch.at(ix, iy) = g.occupied(ix0 + ix, iy0 + iy) ? 1 : 0;
  return w;
}

inline bool inside_window(const LocalWindow& w, double x, double y) {
  double half = w.patch.width * w.patch.resolution / 2.0;
  double cx = w.patch.origin_x + half, cy = w.patch.origin_y + half;
  return std::abs(x - cx) <= half && std::abs(y - cy) <= half;
}

struct LoadedEnv {
  OccupancyGrid grid;
  WorldGenParams params;
  uint64_t seed = 0;
};

inline nlohmann::json to_json(const WorldGenParams& p) {
  return {{"extent_x", p.extent_x},
          {"extent_y", p.extent_y},
          {"room_rows", p.room_rows},
          {"room_cols", p.room_cols},
          {"doorway_min", p.doorway_min},
          {"doorway_max", p.doorway_max},
          {"furniture_min", p.furniture_min},
          {"furniture_max", p.furniture_max},
          {"furniture_size_min", p.furniture_size_min},
          {"furniture_size_max", p.furniture_size_max},
          {"wall_thickness", p.wall_thickness}};
}

inline WorldGenParams world_params_from_json(const nlohmann::json& j) {
  WorldGenParams p;
  p.extent_x = j.at("extent_x").get<double>();
  p.extent_y = j.at("extent_y").get<double>();
  p.room_rows = j.at("room_rows").get<int>();
  p.room_cols = j.at("room_cols").get<int>();
  p.doorway_min = j.at("doorway_min").get<double>();
  p.doorway_max = j.at("doorway_max").get<double>();
  p.furniture_min = j.at("furniture_min").get<int>();
  p.furniture_max = j.at("furniture_max").get<int>();
  p.furniture_size_min = j.at("furniture_size_min").get<double>();
  p.furniture_size_max = j.at("furniture_size_max").get<double>();
  p.wall_thickness = j.at("wall_thickness").get<double>();
  return p;
}

inline std::string sidecar_path(const std::string& pgm_path) {
  auto dot = pgm_path.rfind('.');
  std::string base = (dot == std::string::npos) ? pgm_path : pgm_path.substr(0, dot);
  return base + ".json";
}

// PGM P5 (0 = free, 255 = occupied) plus a JSON sidecar with the metric
// placement and generator provenance.
inline void save_env(const OccupancyGrid& g, const WorldGenParams& params, uint64_t seed,
                     const std::string& pgm_path) {
  std::ofstream f(pgm_path, std::ios::binary);
  if (!f) throw std::runtime_error("save_env: cannot open " + pgm_path);
  f << "P5\n" << g.width << " " << g.height << "\n255\n";
  std::vector<uint8_t> row(size_t(g.width));
  for (int iy = 0; iy < g.height; ++iy) {
    for (int ix = 0; ix < g.width; ++ix) row[ix] = g.at(ix, iy) ? 255 : 0;
    f.write(reinterpret_cast<const char*>(row.data()), g.width);
  }
  if (!f) throw std::runtime_error("save_env: write failed for " + pgm_path);
  f.close();

  nlohmann::json j = {{"resolution", g.resolution},
                      {"origin_x", g.origin_x},
                      {"origin_y", g.origin_y},
                      {"seed", seed},
                      {"params", to_json(params)}};
  std::ofstream jf(sidecar_path(pgm_path));
  if (!jf) throw std::runtime_error("save_env: cannot open " + sidecar_path(pgm_path));
  jf << j.dump(2) << "\n";
}

inline LoadedEnv load_env(const std::string& pgm_path) {
  std::ifstream f(pgm_path, std::ios::binary);
  if (!f) throw std::runtime_error("load_env: cannot open " + pgm_path);
  std::string magic;
  f >> magic;
  if (magic != "P5") throw std::runtime_error("load_env: not a P5 PGM: " + pgm_path);
  int w = 0, h = 0, maxval = 0;
  // skip whitespace and # comments between header tokens
  auto next_int = [&](int& out) {
    for (;;) {
      int c = f.peek();
      if (c == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(c)) {
        f.get();
      } else {
        break;
      }
    }
    if (!(f >> out)) throw std::runtime_error("load_env: truncated PGM header: " + pgm_path);
  };
  next_int(w);
  next_int(h);
  next_int(maxval);
  if (w <= 0 || h <= 0) throw std::runtime_error("load_env: bad PGM dimensions: " + pgm_path);
  if (maxval != 255) throw std::runtime_error("load_env: PGM maxval must be 255: " + pgm_path);
  f.get();  // single whitespace after maxval

  LoadedEnv env;
  env.grid.width = w;
  env.grid.height = h;
  env.grid.cells.resize(size_t(w) * h);
  std::vector<uint8_t> raw(size_t(w) * h);
  f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (f.gcount() != std::streamsize(raw.size()))
    throw std::runtime_error("load_env: truncated PGM data: " + pgm_path);
  for (size_t i = 0; i < raw.size(); ++i) env.grid.cells[i] = raw[i] ? 1 : 0;

  std::ifstream jf(sidecar_path(pgm_path));
  if (!jf) throw std::runtime_error("load_env: missing sidecar " + sidecar_path(pgm_path));
  nlohmann::json j;
  try {
    jf >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_env: malformed sidecar " + sidecar_path(pgm_path) + ": " + e.what());
  }
  env.grid.resolution = j.at("resolution").get<double>();
  env.grid.origin_x = j.at("origin_x").get<double>();
  env.grid.origin_y = j.at("origin_y").get<double>();
  env.seed = j.at("seed").get<uint64_t>();
  env.params = world_params_from_json(j.at("params"));
  if (detail::cell_count(env.params.extent_x, env.grid.resolution) != w ||
      detail::cell_count(env.params.extent_y, env.grid.resolution) != h)
    throw std::runtime_error("load_env: sidecar extent disagrees with PGM dimensions: " + pgm_path);
  return env;
}

}  // namespace nrp
