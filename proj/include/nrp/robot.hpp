#pragma once

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nrp/world.hpp"

namespace nrp {

// Planar mobile base (axis-aligned square, translation only) carrying a
// chain of revolute links, each a capsule. Configuration layout is
// [base_x, base_y, joint_1 .. joint_k] with joint angles relative to the
// previous link (link 0 relative to the +x axis).
struct SnakeModel {
  double base_side = 0.4;
  std::vector<double> link_lengths = {0.5, 0.5, 0.5};
  double link_radius = 0.05;
  std::vector<std::pair<double, double>> joint_limits = {{-2.6, 2.6}, {-2.6, 2.6}, {-2.6, 2.6}};

  int config_dim() const { return 2 + int(link_lengths.size()); }
};

inline SnakeModel default_snake_model() { return SnakeModel{}; }

struct Pose {
  Vec2 base;
  std::vector<std::pair<Vec2, Vec2>> segments;  // one (start, end) per link
};

inline void validate_model(const SnakeModel& m) {
  if (m.base_side <= 0) throw std::invalid_argument("snake model: base_side must be positive");
  if (m.link_radius <= 0) throw std::invalid_argument("snake model: link_radius must be positive");
  if (m.joint_limits.size() != m.link_lengths.size())
    throw std::invalid_argument("snake model: joint_limits count must match link count");
  for (double l : m.link_lengths)
    if (l <= 0) throw std::invalid_argument("snake model: link lengths must be positive");
  for (auto& [lo, hi] : m.joint_limits)
    if (lo > hi) throw std::invalid_argument("snake model: joint limit lo > hi");
}

inline Pose forward_kinematics(const SnakeModel& m, const std::vector<double>& q) {
  if (q.size() != size_t(m.config_dim()))
    throw std::invalid_argument("forward_kinematics: config dimension mismatch");
  Pose p;
  p.base = {q[0], q[1]};
  Vec2 cur = p.base;
  double heading = 0.0;
  p.segments.reserve(m.link_lengths.size());
  for (size_t i = 0; i < m.link_lengths.size(); ++i) {
    heading += q[2 + i];
    Vec2 end{cur.x + m.link_lengths[i] * std::cos(heading),
             cur.y + m.link_lengths[i] * std::sin(heading)};
    p.segments.emplace_back(cur, end);
    cur = end;
  }
  return p;
}

// How space beyond the grid raster is treated during collision checks.
// Whole environments are closed worlds (occupied outside); a local window
// constrains only the obstacles it actually contains.
enum class OutsideRule { Occupied, Free };

namespace detail {

inline double dist_sq_point_segment(double px, double py, Vec2 a, Vec2 b) {
  double abx = b.x - a.x, aby = b.y - a.y;
  double apx = px - a.x, apy = py - a.y;
  double len2 = abx * abx + aby * aby;
  double t = len2 > 0 ? std::clamp((apx * abx + apy * aby) / len2, 0.0, 1.0) : 0.0;
  double dx = apx - t * abx, dy = apy - t * aby;
  return dx * dx + dy * dy;
}

// Visit every cell whose center lies within the shape inflated by half a
// cell diagonal; returns true if any such cell is occupied (per rule).
template <typename InsideFn>
inline bool stamped_cells_hit(const OccupancyGrid& g, OutsideRule rule, double min_x, double min_y,
                              double max_x, double max_y, InsideFn&& inside) {
  double res = g.resolution;
  double inflate = res * 0.7071067811865476;  // half cell diagonal
  int ix0 = int(std::floor((min_x - inflate - g.origin_x) / res));
  int ix1 = int(std::floor((max_x + inflate - g.origin_x) / res));
  int iy0 = int(std::floor((min_y - inflate - g.origin_y) / res));
  int iy1 = int(std::floor((max_y + inflate - g.origin_y) / res));
  for (int iy = iy0; iy <= iy1; ++iy) {
    for (int ix = ix0; ix <= ix1; ++ix) {
      double cx = g.origin_x + (ix + 0.5) * res;
      double cy = g.origin_y + (iy + 0.5) * res;
      if (!inside(cx, cy, inflate)) continue;
      if (!g.in_bounds(ix, iy)) {
        if (rule == OutsideRule::Occupied) return true;
        continue;
      }
      if (g.at(ix, iy)) return true;
    }
  }
  return false;
}

}  // namespace detail

// Conservative collision test: the robot is stamped onto the grid cell by
// cell; a cell counts as touched when its center lies within the shape
// grown by half a cell diagonal, so no overlap smaller than a cell can
// slip between cell centers.
inline bool in_collision(const SnakeModel& m, const std::vector<double>& q, const OccupancyGrid& g,
                         OutsideRule rule = OutsideRule::Occupied) {
  Pose pose = forward_kinematics(m, q);
  double hs = m.base_side / 2.0;
  bool hit = detail::stamped_cells_hit(
      g, rule, pose.base.x - hs, pose.base.y - hs, pose.base.x + hs, pose.base.y + hs,
      [&](double cx, double cy, double inflate) {
        double dx = std::max(std::abs(cx - pose.base.x) - hs, 0.0);
        double dy = std::max(std::abs(cy - pose.base.y) - hs, 0.0);
        return dx * dx + dy * dy <= inflate * inflate;
      });
  if (hit) return true;
  for (auto& [a, b] : pose.segments) {
    double r = m.link_radius;
    if (detail::stamped_cells_hit(
            g, rule, std::min(a.x, b.x) - r, std::min(a.y, b.y) - r, std::max(a.x, b.x) + r,
            std::max(a.y, b.y) + r, [&](double cx, double cy, double inflate) {
              double reach = r + inflate;
              return detail::dist_sq_point_segment(cx, cy, a, b) <= reach * reach;
            }))
      return true;
  }
  return false;
}

inline nlohmann::json to_json(const SnakeModel& m) {
  nlohmann::json limits = nlohmann::json::array();
  for (auto& [lo, hi] : m.joint_limits) limits.push_back({lo, hi});
  return {{"base_side", m.base_side},
          {"link_lengths", m.link_lengths},
          {"link_radius", m.link_radius},
          {"joint_limits", limits}};
}

inline SnakeModel snake_model_from_json(const nlohmann::json& j) {
  SnakeModel m;
  m.base_side = j.at("base_side").get<double>();
  m.link_lengths = j.at("link_lengths").get<std::vector<double>>();
  m.link_radius = j.at("link_radius").get<double>();
  m.joint_limits.clear();
  for (auto& lim : j.at("joint_limits"))
    m.joint_limits.emplace_back(lim.at(0).get<double>(), lim.at(1).get<double>());
  validate_model(m);
  return m;
}

inline void save_robot(const SnakeModel& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_robot: cannot open " + path);
  f << to_json(m).dump(2) << "\n";
}

inline SnakeModel load_robot(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_robot: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_robot: malformed " + path + ": " + e.what());
  }
  return snake_model_from_json(j);
}

}  // namespace nrp
