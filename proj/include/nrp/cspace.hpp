#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nrp/robot.hpp"
#include "nrp/rng.hpp"
#include "nrp/world.hpp"

namespace nrp {

using Config = std::vector<double>;

enum class DimKind { Linear, Angular };

struct Dim {
  DimKind kind = DimKind::Linear;
  double lo = 0.0;   // ignored for Angular (range is [-pi, pi))
  double hi = 0.0;
  double weight = 1.0;
};

struct CSpace {
  std::vector<Dim> dims;
  int size() const { return int(dims.size()); }
};

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 6.28318530717958647692;

// wrap into [-pi, pi)
inline double wrap_angle(double a) {
  double r = std::remainder(a, kTwoPi);  // [-pi, pi]
  return r == kPi ? -kPi : r;
}

// shortest signed angular difference a - b, in [-pi, pi]
inline double angular_diff(double a, double b) { return std::remainder(a - b, kTwoPi); }

// Weighted Euclidean metric; angular dimensions contribute their wrapped
// difference so the two ends of the circle measure as neighbors.
inline double distance(const CSpace& s, const Config& a, const Config& b) {
  double sum = 0.0;
  for (size_t i = 0; i < s.dims.size(); ++i) {
    double d = s.dims[i].kind == DimKind::Angular ? angular_diff(a[i], b[i]) : a[i] - b[i];
    d *= s.dims[i].weight;
    sum += d * d;
  }
  return std::sqrt(sum);
}

// Straight-line interpolation per dimension, shorter arc on angular dims.
// Endpoints are returned exactly rather than through the arithmetic,
// which would round.
inline Config interpolate(const CSpace& s, const Config& a, const Config& b, double t) {
  if (t == 0.0) return a;
  Config q(a.size());
  if (t == 1.0) {
    for (size_t i = 0; i < s.dims.size(); ++i)
      q[i] = s.dims[i].kind == DimKind::Angular ? wrap_angle(b[i]) : b[i];
    return q;
  }
  for (size_t i = 0; i < s.dims.size(); ++i) {
    if (s.dims[i].kind == DimKind::Angular) {
      q[i] = wrap_angle(a[i] + t * angular_diff(b[i], a[i]));
    } else {
      q[i] = a[i] + t * (b[i] - a[i]);
    }
  }
  return q;
}

// Optional axis-aligned sampling region, given as per-dimension [lo, hi].
struct Region {
  Config lo, hi;
};

inline Config sample_uniform(const CSpace& s, Rng& rng, const Region* region = nullptr) {
  Config q(s.dims.size());
  for (size_t i = 0; i < s.dims.size(); ++i) {
    double lo = s.dims[i].kind == DimKind::Angular ? -kPi : s.dims[i].lo;
    double hi = s.dims[i].kind == DimKind::Angular ? kPi : s.dims[i].hi;
    if (region) {
      lo = std::max(lo, region->lo[i]);
      hi = std::min(hi, region->hi[i]);
    }
    if (lo > hi) throw std::invalid_argument("sample_uniform: empty region on dim " + std::to_string(i));
    q[i] = rng.uniform(lo, hi);
  }
  return q;
}

// Moves from q toward target by at most eta (in the metric); reaching the
// target exactly when it is closer than eta.
inline Config steer(const CSpace& s, const Config& q, const Config& target, double eta) {
  double d = distance(s, q, target);
  if (d <= eta) return target;
  return interpolate(s, q, target, eta / d);
}

struct EdgeCheck {
  bool valid = true;
  std::optional<double> first_invalid_s;  // parameter of the first colliding sample
};

// Samples the segment at m+1 evenly spaced parameters, m = ceil(d/step),
// so the spacing never exceeds `step`, both endpoints are included, and
// the check set is symmetric in the edge direction.
inline EdgeCheck edge_valid(const CSpace& s, const SnakeModel& model, const OccupancyGrid& grid,
                            const Config& a, const Config& b, double step,
                            OutsideRule rule = OutsideRule::Occupied) {
  double d = distance(s, a, b);
  int m = std::max(1, int(std::ceil(d / step)));
  if (d == 0.0) m = 0;
  for (int k = 0; k <= m; ++k) {
    double t = m == 0 ? 0.0 : double(k) / m;
    if (in_collision(model, interpolate(s, a, b, t), grid, rule))
      return {false, t};
  }
  return {true, std::nullopt};
}

inline bool within_bounds(const CSpace& s, const Config& q) {
  for (size_t i = 0; i < s.dims.size(); ++i) {
    if (s.dims[i].kind == DimKind::Angular) {
      if (q[i] < -kPi || q[i] >= kPi) return false;
    } else {
      if (q[i] < s.dims[i].lo || q[i] > s.dims[i].hi) return false;
    }
  }
  return true;
}

// Configuration space of a snake robot placed in a grid world: two
// weighted linear dims for the base, one bounded linear dim per joint.
// Joint limits narrower than a full turn make wrapping meaningless, so
// joints are linear even though they measure angles.
inline CSpace make_snake_cspace(const SnakeModel& m, const OccupancyGrid& g,
                                double base_weight = 1.0, double joint_weight = 0.5) {
  CSpace s;
  s.dims.push_back({DimKind::Linear, g.min_x(), g.max_x(), base_weight});
  s.dims.push_back({DimKind::Linear, g.min_y(), g.max_y(), base_weight});
  for (auto& [lo, hi] : m.joint_limits) s.dims.push_back({DimKind::Linear, lo, hi, joint_weight});
  return s;
}

}  // namespace nrp
