#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <symrl/common.hpp>
#include <symrl/symmetry.hpp>

namespace symrl {

// Ball-centric occupancy encoding: five concentric circles, sixteen radials
// each, aligned to the long-term objective direction. One Gaussian-kernel
// sensor per point and per team, plus two closest-player distances and the
// previous high-level target direction.
struct RadarConfig {
  std::array<double, 5> radii = {0.3, 0.6, 1.0, 1.5, 2.1};
  int radials = 16;
  double sigma = 0.225;  // half the mean gap between adjacent circles
  double distance_cap = 10.0;

  int points_per_team() const { return static_cast<int>(radii.size()) * radials; }
  int frame_size() const { return 2 * points_per_team() + 3; }

  void check() const {
    if (radials <= 0) throw std::invalid_argument("RadarConfig: radials must be positive");
    if (sigma <= 0.0) throw std::invalid_argument("RadarConfig: sigma must be positive");
    if (distance_cap <= 0.0) throw std::invalid_argument("RadarConfig: distance cap must be positive");
    double prev = 0.0;
    for (double r : radii) {
      if (r <= prev) throw std::invalid_argument("RadarConfig: radii must be strictly increasing and positive");
      prev = r;
    }
  }
};

struct RadarScene {
  Vec2 ball;
  Vec2 objective;                // unit vector toward the long-term goal
  std::vector<Vec2> teammates;   // excludes the controlled agent
  std::vector<Vec2> opponents;
  double targdir_deg = 0.0;      // previous high-level decision, relative to objective
};

namespace radar_detail {

inline void check_objective(const Vec2& u) {
  if (std::abs(u.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("radar: objective direction must be a unit vector");
}

}  // namespace radar_detail

// Circle-major layout: point index = circle * radials + k, radial k counted
// counterclockwise starting along the objective.
inline std::vector<Vec2> intersection_points(const RadarConfig& cfg, const Vec2& ball,
                                             const Vec2& objective) {
  cfg.check();
  radar_detail::check_objective(objective);
  std::vector<Vec2> pts;
  pts.reserve(cfg.points_per_team());
  const double step = 2.0 * kPi / cfg.radials;
  for (double radius : cfg.radii)
    for (int k = 0; k < cfg.radials; ++k) {
      Vec2 dir = objective.rotated(k * step);
      pts.push_back(ball + dir * radius);
    }
  return pts;
}

// Layout: [teammate sensors | opponent sensors | closest mate dist |
// closest opp dist | targdir]. Sensors saturate at 1; distances are from the
// ball and cap at distance_cap (an empty team reads as the cap).
inline std::vector<double> encode(const RadarConfig& cfg, const RadarScene& scene) {
  auto pts = intersection_points(cfg, scene.ball, scene.objective);
  std::vector<double> frame;
  frame.reserve(cfg.frame_size());
  const double inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  for (const auto& team : {scene.teammates, scene.opponents}) {
    for (const auto& p : pts) {
      double acc = 0.0;
      for (const auto& q : team) {
        Vec2 d = p - q;
        acc += std::exp(-(d.x * d.x + d.y * d.y) * inv);
      }
      frame.push_back(std::min(1.0, acc));
    }
  }
  for (const auto& team : {scene.teammates, scene.opponents}) {
    double best = cfg.distance_cap;
    for (const auto& q : team) best = std::min(best, (q - scene.ball).norm());
    frame.push_back(best);
  }
  frame.push_back(scene.targdir_deg);
  return frame;
}

// Sagittal reflection about the objective axis: radial k maps to
// (radials - k) mod radials within each circle and team block, distances map
// to themselves, targdir flips sign.
inline SymmetrySpec reflection_spec(const RadarConfig& cfg) {
  cfg.check();
  SymmetrySpec spec;
  const int ppt = cfg.points_per_team();
  spec.indices.resize(cfg.frame_size());
  spec.multipliers.assign(cfg.frame_size(), 1.0);
  for (int team = 0; team < 2; ++team)
    for (std::size_t c = 0; c < cfg.radii.size(); ++c)
      for (int k = 0; k < cfg.radials; ++k) {
        int idx = team * ppt + static_cast<int>(c) * cfg.radials + k;
        int mk = (cfg.radials - k) % cfg.radials;
        spec.indices[idx] = team * ppt + static_cast<int>(c) * cfg.radials + mk;
      }
  spec.indices[2 * ppt] = 2 * ppt;
  spec.indices[2 * ppt + 1] = 2 * ppt + 1;
  spec.indices[2 * ppt + 2] = 2 * ppt + 2;
  spec.multipliers[2 * ppt + 2] = -1.0;
  return spec;
}

// Debug dump: one row per sensor as (circle, radial, team, value).
inline std::string radar_csv(const RadarConfig& cfg, const std::vector<double>& frame) {
  if (static_cast<int>(frame.size()) != cfg.frame_size())
    throw std::invalid_argument("radar_csv: frame size mismatch");
  std::ostringstream os;
  os << "circle,radial,team,value\n";
  const int ppt = cfg.points_per_team();
  for (int team = 0; team < 2; ++team)
    for (std::size_t c = 0; c < cfg.radii.size(); ++c)
      for (int k = 0; k < cfg.radials; ++k) {
        int idx = team * ppt + static_cast<int>(c) * cfg.radials + k;
        os << c << ',' << k << ',' << (team == 0 ? "mate" : "opp") << ',' << frame[idx] << '\n';
      }
  return os.str();
}

}  // namespace symrl
