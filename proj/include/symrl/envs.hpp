#pragma once

// Desk-scale 2D training environments. Each one reduces a humanoid soccer
// task to a planar analog with the same reward shape, episode machinery,
// observation layout, and mirror-symmetry structure, at a size where a full
// training run takes minutes on one core.
//
// The shared body model is a planar biped: two 2-link legs driven through
// the action post-processing pipelines plus two shoulder channels used for
// turning. Falling is modeled as a height proxy that sags under excessive
// joint commands.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include <symrl/common.hpp>
#include <symrl/env.hpp>
#include <symrl/pipeline.hpp>
#include <symrl/primitives.hpp>
#include <symrl/symmetry.hpp>

namespace symrl {

inline constexpr double kEnvDt = 0.02;          // control period (s)
inline constexpr int kVisionCycleSteps = 2;     // reward cadence for body tasks
inline constexpr double kStandingZ = 0.50;      // standing height proxy (m)
inline constexpr double kBallDecay = 0.985;     // rolling friction, per step
inline constexpr double kBallContactRadius = 0.2;
inline constexpr double kBallStopSpeed = 0.2;   // kick settling threshold (m/s)
inline constexpr double kBallLostDistance = 0.5;
inline constexpr double kWorkAreaHalf = 7.0;    // walk practice square half-side

// ---------------------------------------------------------------------------
// Reward functions. Pure, bounded as documented; every environment routes its
// reward through one of these.

inline double walk_reward(double progress, double direction_error_deg, double dist_to_target,
                          double move_magnitude) {
  if (direction_error_deg < 0.0) throw std::domain_error("walk_reward: negative direction error");
  double r = progress * std::pow(1.03, -direction_error_deg);
  if (dist_to_target < 0.2) r += 0.01 * (1.0 - std::min(1.0, move_magnitude / 0.01));
  return r;
}

inline double dribble_reward(double ball_speed, double direction_error_rad, double ball_dist,
                             bool hold_rule) {
  if (ball_speed < 0.0) throw std::domain_error("dribble_reward: negative ball speed");
  if (hold_rule && ball_dist < 0.115) return 0.0;
  return ball_speed * std::cos(direction_error_rad);
}

inline double kick_reward(double initial_dist, double final_dist) {
  if (initial_dist < 0.0 || final_dist < 0.0) throw std::domain_error("kick_reward: negative distance");
  return initial_dist - final_dist;
}

inline double push_ll_reward(double ball_speed, double direction_error_rad) {
  if (ball_speed < 0.0) throw std::domain_error("push_ll_reward: negative ball speed");
  double c = std::max(0.0, std::cos(direction_error_rad));
  double c7 = c * c * c * c * c * c * c;
  return std::min(ball_speed, 0.5) * c7;
}

inline double push_hl_reward(double progress, double closest_opp_dist, double closest_mate_dist) {
  if (closest_opp_dist < 0.0 || closest_mate_dist < 0.0)
    throw std::domain_error("push_hl_reward: negative distance");
  double advantage = closest_opp_dist - closest_mate_dist;
  return std::clamp(progress * 0.15, -0.02, 0.02) + std::clamp(advantage * 0.4, -0.3, 0.3);
}

inline double sprint_fwd_reward(double dx, double dt = 0.06) {
  if (dt <= 0.0) throw std::domain_error("sprint_fwd_reward: dt must be positive");
  return dx / dt;
}

inline double sprint_rotate_reward(double speed_2d, double direction_error_deg) {
  return speed_2d * (1.0 - direction_error_deg / 10.0);
}

inline double sprint_kick_reward(const Vec2& direction_unit, const Vec2& ball_velocity) {
  return direction_unit.dot(ball_velocity);
}

// ---------------------------------------------------------------------------
// Virtual players and the ball.

struct PointAgent {
  Vec2 position{};
  Vec2 velocity{};
  Vec2 acceleration{};
  double heading = 0.0;
  double z = kStandingZ;
  bool fallen = false;
};

inline constexpr double kLocoAccelMax = 2.0;   // m/s^2
inline constexpr double kLocoSpeedMax = 0.8;   // m/s
inline constexpr double kLocoArriveDist = 0.05;

// `pace` scales both the speed and acceleration caps; 1.0 is the full stride.
inline void simplified_locomotion(PointAgent& agent, const Vec2& target, double dt,
                                  double pace = 1.0) {
  if (dt <= 0.0) throw std::domain_error("simplified_locomotion: dt must be positive");
  double vmax = kLocoSpeedMax * pace;
  double amax = kLocoAccelMax * pace;
  Vec2 to = target - agent.position;
  double d = to.norm();
  if (d < kLocoArriveDist) {
    agent.velocity = {};
    agent.acceleration = {};
    return;
  }
  Vec2 desired = to * (vmax / d);
  Vec2 acc = (desired - agent.velocity) * (1.0 / dt);
  double an = acc.norm();
  if (an > amax) acc = acc * (amax / an);
  agent.acceleration = acc;
  agent.velocity += acc * dt;
  double vn = agent.velocity.norm();
  if (vn > vmax) agent.velocity = agent.velocity * (vmax / vn);
  agent.position += agent.velocity * dt;
  if (vn > 1e-9) agent.heading = std::atan2(agent.velocity.y, agent.velocity.x);
}

struct Ball2D {
  Vec2 position{};
  Vec2 velocity{};
};

inline void ball_roll(Ball2D& ball, double dt = kEnvDt) {
  ball.position += ball.velocity * dt;
  ball.velocity = ball.velocity * kBallDecay;
}

// Inelastic push: the ball is ejected from the contact disc and picks up the
// body's approach speed along the contact normal. No bounce.
inline void push_ball_contact(Ball2D& ball, const Vec2& body_pos, const Vec2& body_vel,
                              double radius = kBallContactRadius) {
  Vec2 off = ball.position - body_pos;
  double d = off.norm();
  if (d >= radius) return;
  Vec2 n = d > 1e-12 ? off * (1.0 / d) : Vec2{1.0, 0.0};
  ball.position = body_pos + n * radius;
  double rel = (body_vel - ball.velocity).dot(n);
  if (rel > 0.0) ball.velocity += n * rel;
}

// Where the ball comes to rest (speed below the settling threshold) under
// rolling friction alone.
inline Vec2 ball_rest_position(Ball2D ball) {
  while (ball.velocity.norm() >= kBallStopSpeed) ball_roll(ball);
  return ball.position;
}

// ---------------------------------------------------------------------------
// Rate-limited target filters. The per-step delta bound is exact.

struct ScalarRateLimiter {
  double max_abs = 0.0;
  double max_step = 0.0;
  double value = 0.0;

  double update(double request) {
    double target = std::clamp(request, -max_abs, max_abs);
    value += std::clamp(target - value, -max_step, max_step);
    return value;
  }
  void reset_to(double request) { value = std::clamp(request, -max_abs, max_abs); }

  nlohmann::json to_json() const { return {{"max_abs", max_abs}, {"max_step", max_step}, {"value", value}}; }
  static ScalarRateLimiter from_json(const nlohmann::json& j) {
    return {j.at("max_abs").get<double>(), j.at("max_step").get<double>(), j.at("value").get<double>()};
  }
};

struct VectorRateLimiter {
  double max_norm = 0.0;
  double max_step = 0.0;
  Vec2 value{};

  Vec2 update(const Vec2& request) {
    Vec2 target = request;
    double n = target.norm();
    if (n > max_norm) target = target * (max_norm / n);
    Vec2 d = target - value;
    double dn = d.norm();
    if (dn > max_step) d = d * (max_step / dn);
    value += d;
    return value;
  }
  void reset_to(const Vec2& request) {
    value = request;
    double n = value.norm();
    if (n > max_norm) value = value * (max_norm / n);
  }

  nlohmann::json to_json() const {
    return {{"max_norm", max_norm}, {"max_step", max_step}, {"value", {value.x, value.y}}};
  }
  static VectorRateLimiter from_json(const nlohmann::json& j) {
    VectorRateLimiter l;
    l.max_norm = j.at("max_norm").get<double>();
    l.max_step = j.at("max_step").get<double>();
    l.value = {j.at("value")[0].get<double>(), j.at("value")[1].get<double>()};
    return l;
  }
};

namespace env_detail {

inline double wrap_pi(double rad) { return std::remainder(rad, 2.0 * kPi); }
inline double deg(double rad) { return rad * 180.0 / kPi; }
inline double rad(double d) { return d * kPi / 180.0; }

inline nlohmann::json vec_json(const Vec2& v) { return nlohmann::json::array({v.x, v.y}); }
inline Vec2 vec_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

template <std::size_t N>
inline std::array<double, N> arr_from(const nlohmann::json& j) {
  std::array<double, N> a{};
  for (std::size_t i = 0; i < N; ++i) a[i] = j.at(i).get<double>();
  return a;
}

inline SymmetrySpec scalar_spec(double mult) { return {{0}, {mult}}; }
inline SymmetrySpec vec2_spec() { return {{0, 1}, {1.0, -1.0}}; }
inline SymmetrySpec gyro_spec() { return {{0, 1, 2}, {-1.0, 1.0, -1.0}}; }
inline SymmetrySpec acc_spec() { return {{0, 1, 2}, {1.0, -1.0, 1.0}}; }
inline SymmetrySpec ball3_spec() { return {{0, 1, 2}, {1.0, -1.0, 1.0}}; }
inline SymmetrySpec feet_spec() {
  return {{6, 7, 8, 9, 10, 11, 0, 1, 2, 3, 4, 5},
          {1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0}};
}
inline SymmetrySpec ankle_spec() { return {{3, 4, 5, 0, 1, 2}, {1.0, -1.0, 1.0, 1.0, -1.0, 1.0}}; }
inline SymmetrySpec foot_ori_spec() { return {{3, 4, 5, 0, 1, 2}, {-1.0, 1.0, -1.0, -1.0, 1.0, -1.0}}; }
inline SymmetrySpec pair_spec() { return {{1, 0}, {1.0, 1.0}}; }
inline SymmetrySpec joints6_spec() { return {{2, 3, 0, 1, 5, 4}, {1.0, 1.0, 1.0, 1.0, 1.0, 1.0}}; }

inline void apply_in_place6(const SymmetrySpec& spec, std::array<double, 6>& a) {
  std::vector<double> v = apply_symmetry(spec, std::span<const double>(a.data(), a.size()));
  std::copy(v.begin(), v.end(), a.begin());
}

}  // namespace env_detail

// ---------------------------------------------------------------------------
// Planar biped body. Joint order: (hipL, kneeL, hipR, kneeR, shoulderL,
// shoulderR); leg geometry matches the pipeline IK stage (0.25 m links,
// ankle rest point 0.45 m below the hip).

struct BodySensors {
  double z = kStandingZ;
  double dz = 0.0;  // over 0.04 s
  double roll = 0.0;
  double pitch = 0.0;
  std::array<double, 3> gyro{};
  std::array<double, 3> dgyro{};
  std::array<double, 3> acc{};
  std::array<double, 3> dacc{};
  std::array<double, 12> feet{};
  std::array<double, 12> dfeet{};
  std::array<double, 6> ankles{};
  std::array<double, 6> feet_ori{};
  std::array<double, 2> shoulders{};
  std::array<double, 6> joints{};
  std::array<double, 6> djoints{};
};

class DeskBody {
 public:
  struct Tuning {
    double joint_speed_max = 8.0;    // rad/s
    double effort_reference = 24.0;  // summed |command| before the height sags
    double z_drop_gain = 6e-4;       // height loss per unit excess per step
    double z_recover_gain = 0.04;    // per-step pull back toward standing
    double yaw_gain = 1.0;           // rad/s per rad of shoulder split
    double lean_gain = 3.5;          // m/s of drift per m of mean ankle offset
  };

  explicit DeskBody(const std::string& pipeline_preset) : DeskBody(pipeline_preset, Tuning()) {}
  DeskBody(const std::string& pipeline_preset, Tuning tuning)
      : preset_(pipeline_preset), tuning_(tuning), runner_(make_pipeline(pipeline_preset)) {}

  void reset(const Vec2& position, double heading) {
    auto ik = planar_two_link_ik(0.0, -0.45, 0.25, 0.25);
    reset_with_joints(position, heading, {ik.theta1, ik.theta2, ik.theta1, ik.theta2, 0.0, 0.0});
  }

  void reset_with_joints(const Vec2& position, double heading, const std::array<double, 6>& joints) {
    joints_ = joints;
    joints_prev_ = joints;
    runner_.reset();
    pos_ = position;
    heading_ = heading;
    z_ = z_prev1_ = z_prev2_ = kStandingZ;
    roll_ = pitch_ = 0.0;
    com_y_prev_ = 0.0;
    vx_prev_ = vy_prev_ = dz_prev_ = 0.0;
    velocity_world_ = {};
    last_effort_ = 0.0;
    elapsed_ = 0.0;
    update_fk();
    fk_prev_ = fk_;
    foot_world_prev_ = foot_world();
    sensors_ = BodySensors{};
    sensors_.joints = joints_;
    sensors_.ankles = {fk_[0].x, 0.05, fk_[0].y, fk_[1].x, -0.05, fk_[1].y};
    sensors_.feet_ori = {0.0, joints_[0] + joints_[1], 0.0, 0.0, joints_[2] + joints_[3], 0.0};
    sensors_.shoulders = {joints_[4], joints_[5]};
  }

  struct DriveResult {
    std::array<double, 6> speeds{};
    double effort = 0.0;
    bool ik_clamped = false;
  };

  // Run one control step through the pipeline and integrate the joints.
  DriveResult drive(std::span<const double> action, std::span<const double> primitive,
                    std::span<const double> targp = {}, double lambda_scale = 1.0,
                    bool mirrored = false) {
    PipelineInputs in;
    in.mirrored = mirrored;
    in.lambda_scale = lambda_scale;
    in.elapsed_s = elapsed_;
    in.targp = targp;
    in.primitive = primitive;
    in.observed = std::span<const double>(joints_.data(), joints_.size());
    PipelineOutput out = runner_.run(action, in);
    if (out.values.size() != 6) throw std::logic_error("DeskBody: pipeline must yield 6 joint commands");
    DriveResult res;
    res.ik_clamped = out.ik_clamped;
    joints_prev_ = joints_;
    for (int i = 0; i < 6; ++i) {
      double s = std::clamp(out.values[i], -tuning_.joint_speed_max, tuning_.joint_speed_max);
      res.speeds[i] = s;
      res.effort += std::abs(s);
      joints_[i] += s * kEnvDt;
    }
    last_effort_ = res.effort;
    elapsed_ += kEnvDt;
    return res;
  }

  // Integrate planar motion and refresh the sensor block. support_mask bit 0
  // marks the left foot as planted, bit 1 the right; com_y is the lateral
  // sway of the gait primitive (0 outside the step-baseline tasks).
  void integrate(double com_y, int support_mask) {
    fk_prev_ = fk_;
    update_fk();
    double propulsion = 0.0;
    int planted = 0;
    for (int leg = 0; leg < 2; ++leg) {
      if (support_mask & (1 << leg)) {
        propulsion += -(fk_[leg].x - fk_prev_[leg].x);
        ++planted;
      }
    }
    if (planted > 0) propulsion /= planted;
    double mean_x = (fk_[0].x + fk_[1].x) / 2.0;
    double forward = propulsion - tuning_.lean_gain * mean_x * kEnvDt;
    double dlat = com_y - com_y_prev_;
    double yaw_rate = tuning_.yaw_gain * (joints_[4] - joints_[5]);
    Vec2 disp = Vec2{forward, dlat}.rotated(heading_);
    pos_ += disp;
    velocity_world_ = disp * (1.0 / kEnvDt);
    heading_ = env_detail::wrap_pi(heading_ + yaw_rate * kEnvDt);

    double excess = std::max(0.0, last_effort_ - tuning_.effort_reference);
    z_prev2_ = z_prev1_;
    z_prev1_ = z_;
    z_ = std::clamp(z_ + tuning_.z_recover_gain * (kStandingZ - z_) - tuning_.z_drop_gain * excess,
                    0.0, kStandingZ);
    double dz_now = (z_ - z_prev1_) / kEnvDt;

    double roll_new = 4.0 * com_y;
    double pitch_new = -2.0 * mean_x;
    double vx = forward / kEnvDt;
    double vy = dlat / kEnvDt;

    BodySensors prev = sensors_;
    BodySensors& s = sensors_;
    s.z = z_;
    s.dz = (z_ - z_prev2_) / 0.04;
    s.roll = roll_new;
    s.pitch = pitch_new;
    s.gyro = {(roll_new - roll_) / kEnvDt, (pitch_new - pitch_) / kEnvDt, yaw_rate};
    s.acc = {(vx - vx_prev_) / kEnvDt, (vy - vy_prev_) / kEnvDt, (dz_now - dz_prev_) / kEnvDt + 9.81};
    for (int i = 0; i < 3; ++i) {
      s.dgyro[i] = (s.gyro[i] - prev.gyro[i]) / kEnvDt;
      s.dacc[i] = (s.acc[i] - prev.acc[i]) / kEnvDt;
    }
    for (int leg = 0; leg < 2; ++leg) {
      bool sup = support_mask & (1 << leg);
      double side = leg == 0 ? 1.0 : -1.0;
      s.feet[6 * leg + 0] = fk_[leg].x;
      s.feet[6 * leg + 1] = side * 0.05;
      s.feet[6 * leg + 2] = fk_[leg].y + 0.45;
      s.feet[6 * leg + 3] = sup ? vx : 0.0;
      s.feet[6 * leg + 4] = sup ? -vy : 0.0;
      s.feet[6 * leg + 5] = sup ? 1.0 : 0.0;
    }
    for (int i = 0; i < 12; ++i) s.dfeet[i] = (s.feet[i] - prev.feet[i]) / kEnvDt;
    s.ankles = {fk_[0].x, 0.05, fk_[0].y, fk_[1].x, -0.05, fk_[1].y};
    s.feet_ori = {0.0, joints_[0] + joints_[1], 0.0, 0.0, joints_[2] + joints_[3], 0.0};
    s.shoulders = {joints_[4], joints_[5]};
    s.joints = joints_;
    for (int i = 0; i < 6; ++i) s.djoints[i] = (joints_[i] - joints_prev_[i]) / kEnvDt;

    roll_ = roll_new;
    pitch_ = pitch_new;
    vx_prev_ = vx;
    vy_prev_ = vy;
    dz_prev_ = dz_now;
    com_y_prev_ = com_y;
    foot_world_prev_ = foot_world_now_;
    foot_world_now_ = foot_world();
  }

  const BodySensors& sensors() const { return sensors_; }
  const Vec2& position() const { return pos_; }
  void displace(const Vec2& d) { pos_ += d; }
  double heading() const { return heading_; }
  double z() const { return z_; }
  const Vec2& velocity_world() const { return velocity_world_; }
  const std::array<double, 6>& joints() const { return joints_; }
  const std::array<Vec2, 2>& ankle_fk() const { return fk_; }
  PipelineRunner& pipeline() { return runner_; }

  // Top-down world position of each foot (x-forward/y-left body offsets).
  std::array<Vec2, 2> foot_world() const {
    std::array<Vec2, 2> w;
    for (int leg = 0; leg < 2; ++leg) {
      double side = leg == 0 ? 1.0 : -1.0;
      Vec2 local{fk_[leg].x, side * 0.05};
      w[leg] = pos_ + local.rotated(heading_);
    }
    return w;
  }
  std::array<Vec2, 2> foot_velocity_world() const {
    std::array<Vec2, 2> v;
    for (int leg = 0; leg < 2; ++leg)
      v[leg] = (foot_world_now_[leg] - foot_world_prev_[leg]) * (1.0 / kEnvDt);
    return v;
  }

  // Reflect the body across its sagittal plane together with a world mirror
  // about the x axis. Used by the symmetry diagnostics.
  void mirror() {
    auto swap_joints = [](std::array<double, 6>& a) {
      std::swap(a[0], a[2]);
      std::swap(a[1], a[3]);
      std::swap(a[4], a[5]);
    };
    swap_joints(joints_);
    swap_joints(joints_prev_);
    std::swap(fk_[0], fk_[1]);
    std::swap(fk_prev_[0], fk_prev_[1]);
    std::swap(foot_world_now_[0], foot_world_now_[1]);
    std::swap(foot_world_prev_[0], foot_world_prev_[1]);
    for (auto* arr : {&foot_world_now_, &foot_world_prev_})
      for (auto& p : *arr) p.y = -p.y;
    pos_.y = -pos_.y;
    heading_ = -heading_;
    velocity_world_.y = -velocity_world_.y;
    roll_ = -roll_;
    com_y_prev_ = -com_y_prev_;
    vy_prev_ = -vy_prev_;
    auto& st = runner_.state();
    SymmetrySpec swap6 = env_detail::joints6_spec();
    if (st.ema.size() == 6) st.ema = apply_symmetry(swap6, st.ema);
    if (st.last_command.size() == 6) st.last_command = apply_symmetry(swap6, st.last_command);

    BodySensors& s = sensors_;
    s.roll = -s.roll;
    s.gyro = {-s.gyro[0], s.gyro[1], -s.gyro[2]};
    s.dgyro = {-s.dgyro[0], s.dgyro[1], -s.dgyro[2]};
    s.acc = {s.acc[0], -s.acc[1], s.acc[2]};
    s.dacc = {s.dacc[0], -s.dacc[1], s.dacc[2]};
    auto mirror_feet = [](std::array<double, 12>& f) {
      for (int i = 0; i < 6; ++i) std::swap(f[i], f[i + 6]);
      for (int leg = 0; leg < 2; ++leg) {
        f[6 * leg + 1] = -f[6 * leg + 1];
        f[6 * leg + 4] = -f[6 * leg + 4];
      }
    };
    mirror_feet(s.feet);
    mirror_feet(s.dfeet);
    auto mirror_triplet = [](std::array<double, 6>& a, double y_mult) {
      for (int i = 0; i < 3; ++i) std::swap(a[i], a[i + 3]);
      a[1] *= y_mult;
      a[4] *= y_mult;
    };
    mirror_triplet(s.ankles, -1.0);
    mirror_triplet(s.feet_ori, 1.0);
    std::swap(s.shoulders[0], s.shoulders[1]);
    swap_joints(s.joints);
    swap_joints(s.djoints);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["joints"] = joints_;
    j["joints_prev"] = joints_prev_;
    j["pipeline"] = runner_.state().to_json();
    j["pos"] = env_detail::vec_json(pos_);
    j["heading"] = heading_;
    j["z"] = {z_, z_prev1_, z_prev2_};
    j["roll"] = roll_;
    j["pitch"] = pitch_;
    j["com_y_prev"] = com_y_prev_;
    j["v_prev"] = {vx_prev_, vy_prev_, dz_prev_};
    j["velocity_world"] = env_detail::vec_json(velocity_world_);
    j["last_effort"] = last_effort_;
    j["elapsed"] = elapsed_;
    j["fk"] = {env_detail::vec_json(fk_[0]), env_detail::vec_json(fk_[1])};
    j["fk_prev"] = {env_detail::vec_json(fk_prev_[0]), env_detail::vec_json(fk_prev_[1])};
    j["foot_now"] = {env_detail::vec_json(foot_world_now_[0]), env_detail::vec_json(foot_world_now_[1])};
    j["foot_prev"] = {env_detail::vec_json(foot_world_prev_[0]), env_detail::vec_json(foot_world_prev_[1])};
    j["sensors"] = sensors_json();
    return j;
  }

  void load_json(const nlohmann::json& j) {
    joints_ = env_detail::arr_from<6>(j.at("joints"));
    joints_prev_ = env_detail::arr_from<6>(j.at("joints_prev"));
    runner_.state() = PipelineState::from_json(j.at("pipeline"));
    pos_ = env_detail::vec_from(j.at("pos"));
    heading_ = j.at("heading").get<double>();
    z_ = j.at("z").at(0).get<double>();
    z_prev1_ = j.at("z").at(1).get<double>();
    z_prev2_ = j.at("z").at(2).get<double>();
    roll_ = j.at("roll").get<double>();
    pitch_ = j.at("pitch").get<double>();
    com_y_prev_ = j.at("com_y_prev").get<double>();
    vx_prev_ = j.at("v_prev").at(0).get<double>();
    vy_prev_ = j.at("v_prev").at(1).get<double>();
    dz_prev_ = j.at("v_prev").at(2).get<double>();
    velocity_world_ = env_detail::vec_from(j.at("velocity_world"));
    last_effort_ = j.at("last_effort").get<double>();
    elapsed_ = j.at("elapsed").get<double>();
    fk_ = {env_detail::vec_from(j.at("fk").at(0)), env_detail::vec_from(j.at("fk").at(1))};
    fk_prev_ = {env_detail::vec_from(j.at("fk_prev").at(0)), env_detail::vec_from(j.at("fk_prev").at(1))};
    foot_world_now_ = {env_detail::vec_from(j.at("foot_now").at(0)),
                       env_detail::vec_from(j.at("foot_now").at(1))};
    foot_world_prev_ = {env_detail::vec_from(j.at("foot_prev").at(0)),
                        env_detail::vec_from(j.at("foot_prev").at(1))};
    sensors_from_json(j.at("sensors"));
  }

 private:
  void update_fk() {
    for (int leg = 0; leg < 2; ++leg) {
      double x, y;
      fk_two_link(joints_[2 * leg], joints_[2 * leg + 1], 0.25, 0.25, x, y);
      fk_[leg] = {x, y};
    }
  }

  nlohmann::json sensors_json() const {
    const BodySensors& s = sensors_;
    nlohmann::json j;
    j["z"] = s.z;
    j["dz"] = s.dz;
    j["roll"] = s.roll;
    j["pitch"] = s.pitch;
    j["gyro"] = s.gyro;
    j["dgyro"] = s.dgyro;
    j["acc"] = s.acc;
    j["dacc"] = s.dacc;
    j["feet"] = s.feet;
    j["dfeet"] = s.dfeet;
    j["ankles"] = s.ankles;
    j["feet_ori"] = s.feet_ori;
    j["shoulders"] = s.shoulders;
    j["joints"] = s.joints;
    j["djoints"] = s.djoints;
    return j;
  }
  void sensors_from_json(const nlohmann::json& j) {
    BodySensors& s = sensors_;
    s.z = j.at("z").get<double>();
    s.dz = j.at("dz").get<double>();
    s.roll = j.at("roll").get<double>();
    s.pitch = j.at("pitch").get<double>();
    s.gyro = env_detail::arr_from<3>(j.at("gyro"));
    s.dgyro = env_detail::arr_from<3>(j.at("dgyro"));
    s.acc = env_detail::arr_from<3>(j.at("acc"));
    s.dacc = env_detail::arr_from<3>(j.at("dacc"));
    s.feet = env_detail::arr_from<12>(j.at("feet"));
    s.dfeet = env_detail::arr_from<12>(j.at("dfeet"));
    s.ankles = env_detail::arr_from<6>(j.at("ankles"));
    s.feet_ori = env_detail::arr_from<6>(j.at("feet_ori"));
    s.shoulders = env_detail::arr_from<2>(j.at("shoulders"));
    s.joints = env_detail::arr_from<6>(j.at("joints"));
    s.djoints = env_detail::arr_from<6>(j.at("djoints"));
  }

  std::string preset_;
  Tuning tuning_;
  PipelineRunner runner_;
  std::array<double, 6> joints_{};
  std::array<double, 6> joints_prev_{};
  Vec2 pos_{};
  double heading_ = 0.0;
  double z_ = kStandingZ, z_prev1_ = kStandingZ, z_prev2_ = kStandingZ;
  double roll_ = 0.0, pitch_ = 0.0;
  double com_y_prev_ = 0.0;
  double vx_prev_ = 0.0, vy_prev_ = 0.0, dz_prev_ = 0.0;
  Vec2 velocity_world_{};
  double last_effort_ = 0.0;
  double elapsed_ = 0.0;
  std::array<Vec2, 2> fk_{};
  std::array<Vec2, 2> fk_prev_{};
  std::array<Vec2, 2> foot_world_now_{};
  std::array<Vec2, 2> foot_world_prev_{};
  BodySensors sensors_;
};

// Shared gait state for the tasks built on the step-baseline primitive.
struct GaitCore {
  DeskBody body;
  PhaseState phase;
  StepBaselineParams params;

  GaitCore(const std::string& preset, const StepBaselineParams& p, DeskBody::Tuning t = {})
      : body(preset, t), params(p) {}

  void reset(const Vec2& pos, double heading) {
    body.reset(pos, heading);
    phase = PhaseState{};
  }

  // One control step: baseline primitive, pipeline, phase advance, motion.
  DeskBody::DriveResult advance(std::span<const double> action, std::span<const double> targp,
                                double lambda_scale) {
    BaselinePose bp = baseline_pose(phase, params);
    std::array<double, 6> prim{};
    if (bp.swing == Leg::kLeft)
      prim[1] = bp.swing_z;
    else
      prim[3] = bp.swing_z;
    auto res = body.drive(action, prim, targp, lambda_scale);
    Leg support = bp.support;
    phase = advance_phase(phase, kEnvDt, params.period);
    double com_now = baseline_pose(phase, params).com_y;
    body.integrate(com_now, 1 << static_cast<int>(support));
    return res;
  }

  void mirror() {
    body.mirror();
    phase.swing = other(phase.swing);
  }

  nlohmann::json to_json() const {
    return {{"body", body.to_json()},
            {"phase", {{"substep", phase.substep}, {"resolution", phase.resolution},
                       {"swing", static_cast<int>(phase.swing)}}}};
  }
  void load_json(const nlohmann::json& j) {
    body.load_json(j.at("body"));
    phase.substep = j.at("phase").at("substep").get<std::int64_t>();
    phase.resolution = j.at("phase").at("resolution").get<std::int64_t>();
    phase.swing = static_cast<Leg>(j.at("phase").at("swing").get<int>());
  }
};

// ---------------------------------------------------------------------------
// Omnidirectional walk: chase a moving target position while facing a target
// direction inside a 14 m x 14 m practice area.

class WalkEnv : public Environment {
 public:
  WalkEnv() : core_("walk", StepBaselineParams::walk()) {}

  int observation_size() const override { return 51; }
  int action_size() const override { return 6; }

  std::vector<double> reset(Rng& rng) override {
    core_.reset({0.0, 0.0}, rng.uniform(-kPi, kPi));
    tp_ = {rng.uniform(-kWorkAreaHalf, kWorkAreaHalf), rng.uniform(-kWorkAreaHalf, kWorkAreaHalf)};
    double ang = rng.uniform(-kPi, kPi);
    tp_vel_ = Vec2{std::cos(ang), std::sin(ang)} * rng.uniform(0.0, kTpSpeedMax);
    tp_timer_ = rng.exponential(1.6);
    td_follows_tp_ = rng.uniform() < 0.3;
    td_ = td_follows_tp_ ? direction_to_tp() : rng.uniform(-kPi, kPi);
    td_timer_ = rng.exponential(4.0);
    targp_filter_ = {0.5, 0.014};
    targp_filter_.reset_to(tp_body());
    targdir_filter_ = {45.0, 1.6};
    targdir_filter_.reset_to(heading_error_deg());
    targp_prev_ = targp_filter_.value;
    prev_action_.fill(0.0);
    step_index_ = 0;
    cycle_dist_ = (tp_ - core_.body.position()).norm();
    cycle_pos_ = core_.body.position();
    return build_obs();
  }

  StepResult step(std::span<const double> action, Rng& rng) override {
    if (static_cast<int>(action.size()) != action_size())
      throw std::invalid_argument("WalkEnv: action dimension mismatch");
    ++step_index_;
    tp_timer_ -= kEnvDt;
    if (tp_timer_ <= 0.0) {
      double ang = rng.uniform(-kPi, kPi);
      tp_vel_ = Vec2{std::cos(ang), std::sin(ang)} * rng.uniform(0.0, kTpSpeedMax);
      tp_timer_ = rng.exponential(1.6);
    }
    tp_ += tp_vel_ * kEnvDt;
    if (std::abs(tp_.x) > kWorkAreaHalf || std::abs(tp_.y) > kWorkAreaHalf) tp_ = {0.0, 0.0};
    if (td_follows_tp_) {
      td_ = direction_to_tp();
    } else {
      td_timer_ -= kEnvDt;
      if (td_timer_ <= 0.0) {
        td_ = rng.uniform(-kPi, kPi);
        td_timer_ = rng.exponential(4.0);
      }
    }
    targp_prev_ = targp_filter_.value;
    targp_filter_.update(tp_body());
    targdir_prev_ = targdir_filter_.value;
    targdir_filter_.update(heading_error_deg());

    std::array<double, 2> tp_span{targp_filter_.value.x, targp_filter_.value.y};
    core_.advance(action, tp_span, 1.0);
    std::copy(action.begin(), action.end(), prev_action_.begin());

    StepResult out;
    if (step_index_ % kVisionCycleSteps == 0) {
      double d_now = (tp_ - core_.body.position()).norm();
      double progress = cycle_dist_ - d_now;
      double err = std::abs(env_detail::deg(env_detail::wrap_pi(td_ - core_.body.heading())));
      double move = (core_.body.position() - cycle_pos_).norm() / kVisionCycleSteps;
      out.reward = walk_reward(progress, err, d_now, move);
      cycle_dist_ = d_now;
      cycle_pos_ = core_.body.position();
    }
    out.done = core_.body.z() < 0.35 || step_index_ >= kMaxSteps;
    out.observation = build_obs();
    return out;
  }

  SymmetrySpec observation_symmetry() const override {
    return walk_observation_manifest().concat();
  }
  SymmetrySpec action_symmetry() const override { return env_detail::joints6_spec(); }

  static SymmetryManifest walk_observation_manifest() {
    using namespace env_detail;
    SymmetryManifest m;
    m.blocks = {{"step", scalar_spec(1)},    {"z", scalar_spec(1)},
                {"dz", scalar_spec(1)},      {"roll", scalar_spec(-1)},
                {"pitch", scalar_spec(1)},   {"gyro", gyro_spec()},
                {"acc", acc_spec()},         {"feet", feet_spec()},
                {"ankles", ankle_spec()},    {"feetori", foot_ori_spec()},
                {"shldrs", pair_spec()},     {"action", joints6_spec()},
                {"sbprog", scalar_spec(1)},  {"sbleg", pair_spec()},
                {"targp", vec2_spec()},      {"targv", vec2_spec()},
                {"targdir", scalar_spec(-1)}};
    return m;
  }

  void reflect_world() override {
    core_.mirror();
    tp_.y = -tp_.y;
    tp_vel_.y = -tp_vel_.y;
    td_ = -td_;
    targp_filter_.value.y = -targp_filter_.value.y;
    targp_prev_.y = -targp_prev_.y;
    targdir_filter_.value = -targdir_filter_.value;
    targdir_prev_ = -targdir_prev_;
    env_detail::apply_in_place6(env_detail::joints6_spec(), prev_action_);
    cycle_pos_.y = -cycle_pos_.y;
  }

  nlohmann::json save_state() const override {
    nlohmann::json j;
    j["core"] = core_.to_json();
    j["tp"] = env_detail::vec_json(tp_);
    j["tp_vel"] = env_detail::vec_json(tp_vel_);
    j["tp_timer"] = tp_timer_;
    j["td"] = td_;
    j["td_timer"] = td_timer_;
    j["td_follows_tp"] = td_follows_tp_;
    j["targp_filter"] = targp_filter_.to_json();
    j["targdir_filter"] = targdir_filter_.to_json();
    j["targp_prev"] = env_detail::vec_json(targp_prev_);
    j["targdir_prev"] = targdir_prev_;
    j["prev_action"] = prev_action_;
    j["step_index"] = step_index_;
    j["cycle_dist"] = cycle_dist_;
    j["cycle_pos"] = env_detail::vec_json(cycle_pos_);
    return j;
  }
  void load_state(const nlohmann::json& j) override {
    core_.load_json(j.at("core"));
    tp_ = env_detail::vec_from(j.at("tp"));
    tp_vel_ = env_detail::vec_from(j.at("tp_vel"));
    tp_timer_ = j.at("tp_timer").get<double>();
    td_ = j.at("td").get<double>();
    td_timer_ = j.at("td_timer").get<double>();
    td_follows_tp_ = j.at("td_follows_tp").get<bool>();
    targp_filter_ = VectorRateLimiter::from_json(j.at("targp_filter"));
    targdir_filter_ = ScalarRateLimiter::from_json(j.at("targdir_filter"));
    targp_prev_ = env_detail::vec_from(j.at("targp_prev"));
    targdir_prev_ = j.at("targdir_prev").get<double>();
    prev_action_ = env_detail::arr_from<6>(j.at("prev_action"));
    step_index_ = j.at("step_index").get<std::int64_t>();
    cycle_dist_ = j.at("cycle_dist").get<double>();
    cycle_pos_ = env_detail::vec_from(j.at("cycle_pos"));
  }

  std::vector<double> current_observation() const override { return build_obs(); }

  nlohmann::json replay_record() const override {
    return {{"agent", env_detail::vec_json(core_.body.position())},
            {"heading", core_.body.heading()},
            {"target", env_detail::vec_json(tp_)}};
  }

  const GaitCore& core() const { return core_; }

 private:
  static constexpr double kTpSpeedMax = 0.7;
  static constexpr std::int64_t kMaxSteps = 400;  // 8 s

  double direction_to_tp() const {
    Vec2 d = tp_ - core_.body.position();
    return std::atan2(d.y, d.x);
  }
  Vec2 tp_body() const { return (tp_ - core_.body.position()).rotated(-core_.body.heading()); }
  double heading_error_deg() const {
    return env_detail::deg(env_detail::wrap_pi(td_ - core_.body.heading()));
  }

  std::vector<double> build_obs() const {
    const BodySensors& s = core_.body.sensors();
    PhaseFeatures pf = phase_features(core_.phase);
    std::vector<double> o;
    o.reserve(51);
    o.push_back(0.01 * static_cast<double>(std::min<std::int64_t>(step_index_, 120)));
    o.push_back(s.z);
    o.push_back(s.dz);
    o.push_back(s.roll);
    o.push_back(s.pitch);
    o.insert(o.end(), s.gyro.begin(), s.gyro.end());
    o.insert(o.end(), s.acc.begin(), s.acc.end());
    o.insert(o.end(), s.feet.begin(), s.feet.end());
    o.insert(o.end(), s.ankles.begin(), s.ankles.end());
    o.insert(o.end(), s.feet_ori.begin(), s.feet_ori.end());
    o.insert(o.end(), s.shoulders.begin(), s.shoulders.end());
    o.insert(o.end(), prev_action_.begin(), prev_action_.end());
    o.push_back(pf.sbprog);
    o.push_back(pf.leg_left);
    o.push_back(pf.leg_right);
    o.push_back(targp_filter_.value.x);
    o.push_back(targp_filter_.value.y);
    o.push_back((targp_filter_.value.x - targp_prev_.x) / kEnvDt);
    o.push_back((targp_filter_.value.y - targp_prev_.y) / kEnvDt);
    o.push_back(env_detail::rad(targdir_filter_.value));
    return o;
  }

  GaitCore core_;
  Vec2 tp_{};
  Vec2 tp_vel_{};
  double tp_timer_ = 0.0;
  double td_ = 0.0;
  double td_timer_ = 0.0;
  bool td_follows_tp_ = false;
  VectorRateLimiter targp_filter_{0.5, 0.014};
  ScalarRateLimiter targdir_filter_{45.0, 1.6};
  Vec2 targp_prev_{};
  double targdir_prev_ = 0.0;
  std::array<double, 6> prev_action_{};
  std::int64_t step_index_ = 0;
  double cycle_dist_ = 0.0;
  Vec2 cycle_pos_{};
};

// ---------------------------------------------------------------------------
// Dribble: keep pushing the ball along a shifting target direction.

class DribbleEnv : public Environment {
 public:
  explicit DribbleEnv(bool hold_rule)
      : hold_rule_(hold_rule),
        core_("dribble", hold_rule ? StepBaselineParams::dribble_v2() : StepBaselineParams::dribble_v1()) {}

  int observation_size() const override { return 48; }
  int action_size() const override { return 6; }

  std::vector<double> reset(Rng& rng) override {
    ball_ = Ball2D{};
    double ang = rng.uniform(-kPi, kPi);
    ball_.velocity = Vec2{std::cos(ang), std::sin(ang)} * rng.uniform(0.0, 1.0);
    PointAgent walker;
    double spawn = rng.uniform(-kPi, kPi);
    walker.position = Vec2{std::cos(spawn), std::sin(spawn)} * rng.uniform(0.5, 1.5);
    walker.heading = rng.uniform(-kPi, kPi);
    int guard = 0;
    while ((ball_.position - walker.position).norm() >= 0.25 && guard++ < 2000) {
      simplified_locomotion(walker, ball_.position, kEnvDt);
      ball_roll(ball_);
    }
    core_.reset(walker.position, walker.heading);
    td_ = rng.uniform(-kPi, kPi);
    td_timer_ = rng.exponential(0.33);
    targdir_filter_ = {80.0, 20.0};
    targdir_filter_.reset_to(heading_error_deg());
    targdir_prev_ = targdir_filter_.value;
    ball_body_hist_[0] = ball_body_hist_[1] = ball_body();
    ballz_hist_[0] = ballz_hist_[1] = ball_z_body();
    step_index_ = 0;
    return build_obs();
  }

  StepResult step(std::span<const double> action, Rng& rng) override {
    if (static_cast<int>(action.size()) != action_size())
      throw std::invalid_argument("DribbleEnv: action dimension mismatch");
    ++step_index_;
    td_timer_ -= kEnvDt;
    if (td_timer_ <= 0.0) {
      td_ = rng.uniform(-kPi, kPi);
      td_timer_ = rng.exponential(0.33);
    }
    targdir_prev_ = targdir_filter_.value;
    targdir_filter_.update(heading_error_deg());

    core_.advance(action, {}, 1.0);
    ball_roll(ball_);
    push_ball_contact(ball_, core_.body.position(), core_.body.velocity_world());

    ball_body_hist_[0] = ball_body_hist_[1];
    ball_body_hist_[1] = ball_body();
    ballz_hist_[0] = ballz_hist_[1];
    ballz_hist_[1] = ball_z_body();

    StepResult out;
    double speed = ball_.velocity.norm();
    double want = core_.body.heading() + env_detail::rad(targdir_filter_.value);
    double err = speed > 1e-12
                     ? std::abs(env_detail::wrap_pi(std::atan2(ball_.velocity.y, ball_.velocity.x) - want))
                     : 0.0;
    out.reward = dribble_reward(speed, err, ball_dist(), hold_rule_);
    out.done = core_.body.z() < 0.40 || step_index_ >= kMaxSteps || planar_ball_dist() > kBallLostDistance;
    out.observation = build_obs();
    return out;
  }

  SymmetrySpec observation_symmetry() const override { return manifest().concat(); }
  SymmetrySpec action_symmetry() const override { return env_detail::joints6_spec(); }

  static SymmetryManifest manifest() {
    using namespace env_detail;
    SymmetryManifest m;
    m.blocks = {{"step", scalar_spec(1)},   {"z", scalar_spec(1)},
                {"dz", scalar_spec(1)},     {"roll", scalar_spec(-1)},
                {"pitch", scalar_spec(1)},  {"gyro", gyro_spec()},
                {"acc", acc_spec()},        {"feet", feet_spec()},
                {"joints", joints6_spec()}, {"djoints", joints6_spec()},
                {"sbprog", scalar_spec(1)}, {"sbleg", pair_spec()},
                {"sbsin", scalar_spec(1)},  {"ballp", ball3_spec()},
                {"ballv", ball3_spec()},    {"balld", scalar_spec(1)},
                {"targdir", scalar_spec(-1)}, {"targv", scalar_spec(-1)}};
    return m;
  }

  void reflect_world() override {
    core_.mirror();
    ball_.position.y = -ball_.position.y;
    ball_.velocity.y = -ball_.velocity.y;
    td_ = -td_;
    targdir_filter_.value = -targdir_filter_.value;
    targdir_prev_ = -targdir_prev_;
    for (auto& b : ball_body_hist_) b.y = -b.y;
  }

  nlohmann::json save_state() const override {
    nlohmann::json j;
    j["core"] = core_.to_json();
    j["ball_pos"] = env_detail::vec_json(ball_.position);
    j["ball_vel"] = env_detail::vec_json(ball_.velocity);
    j["td"] = td_;
    j["td_timer"] = td_timer_;
    j["targdir_filter"] = targdir_filter_.to_json();
    j["targdir_prev"] = targdir_prev_;
    j["ball_hist"] = {env_detail::vec_json(ball_body_hist_[0]), env_detail::vec_json(ball_body_hist_[1])};
    j["ballz_hist"] = ballz_hist_;
    j["step_index"] = step_index_;
    return j;
  }
  void load_state(const nlohmann::json& j) override {
    core_.load_json(j.at("core"));
    ball_.position = env_detail::vec_from(j.at("ball_pos"));
    ball_.velocity = env_detail::vec_from(j.at("ball_vel"));
    td_ = j.at("td").get<double>();
    td_timer_ = j.at("td_timer").get<double>();
    targdir_filter_ = ScalarRateLimiter::from_json(j.at("targdir_filter"));
    targdir_prev_ = j.at("targdir_prev").get<double>();
    ball_body_hist_ = {env_detail::vec_from(j.at("ball_hist").at(0)),
                       env_detail::vec_from(j.at("ball_hist").at(1))};
    ballz_hist_ = env_detail::arr_from<2>(j.at("ballz_hist"));
    step_index_ = j.at("step_index").get<std::int64_t>();
  }

  std::vector<double> current_observation() const override { return build_obs(); }

  nlohmann::json replay_record() const override {
    return {{"agent", env_detail::vec_json(core_.body.position())},
            {"heading", core_.body.heading()},
            {"ball", env_detail::vec_json(ball_.position)}};
  }

  const Ball2D& ball() const { return ball_; }
  const GaitCore& core() const { return core_; }

 private:
  static constexpr std::int64_t kMaxSteps = 2000;  // 40 s

  double heading_error_deg() const {
    return env_detail::deg(env_detail::wrap_pi(td_ - core_.body.heading()));
  }
  Vec2 ball_body() const {
    return (ball_.position - core_.body.position()).rotated(-core_.body.heading());
  }
  double ball_z_body() const { return 0.02 - core_.body.z(); }
  double planar_ball_dist() const { return (ball_.position - core_.body.position()).norm(); }
  double ball_dist() const {
    Vec2 b = ball_body();
    double z = ball_z_body();
    return std::sqrt(b.x * b.x + b.y * b.y + z * z);
  }

  std::vector<double> build_obs() const {
    const BodySensors& s = core_.body.sensors();
    PhaseFeatures pf = phase_features(core_.phase);
    Vec2 b = ball_body_hist_[1];
    std::vector<double> o;
    o.reserve(48);
    o.push_back(0.01 * static_cast<double>(std::min<std::int64_t>(step_index_, 96)));
    o.push_back(s.z);
    o.push_back(s.dz);
    o.push_back(s.roll);
    o.push_back(s.pitch);
    o.insert(o.end(), s.gyro.begin(), s.gyro.end());
    o.insert(o.end(), s.acc.begin(), s.acc.end());
    o.insert(o.end(), s.feet.begin(), s.feet.end());
    o.insert(o.end(), s.joints.begin(), s.joints.end());
    o.insert(o.end(), s.djoints.begin(), s.djoints.end());
    o.push_back(pf.sbprog);
    o.push_back(pf.leg_left);
    o.push_back(pf.leg_right);
    o.push_back(pf.sbsin);
    o.push_back(b.x);
    o.push_back(b.y);
    o.push_back(ballz_hist_[1]);
    o.push_back((ball_body_hist_[1].x - ball_body_hist_[0].x) / 0.04);
    o.push_back((ball_body_hist_[1].y - ball_body_hist_[0].y) / 0.04);
    o.push_back((ballz_hist_[1] - ballz_hist_[0]) / 0.04);
    o.push_back(ball_dist());
    o.push_back(env_detail::rad(targdir_filter_.value));
    o.push_back(env_detail::rad(targdir_filter_.value - targdir_prev_) / kEnvDt);
    return o;
  }

  bool hold_rule_;
  GaitCore core_;
  Ball2D ball_{};
  double td_ = 0.0;
  double td_timer_ = 0.0;
  ScalarRateLimiter targdir_filter_{80.0, 20.0};
  double targdir_prev_ = 0.0;
  std::array<Vec2, 2> ball_body_hist_{};
  std::array<double, 2> ballz_hist_{};
  std::int64_t step_index_ = 0;
};

// ---------------------------------------------------------------------------
// Kicks: a short burst of joint speeds sends the ball toward a fixed target;
// the episode is scored once the ball settles.

class KickEnv : public Environment {
 public:
  explicit KickEnv(bool short_kick)
      : short_kick_(short_kick), body_(short_kick ? "kick_short" : "kick_long") {}

  int observation_size() const override { return short_kick_ ? 44 : 43; }
  int action_size() const override { return 6; }

  std::vector<double> reset(Rng& rng) override {
    ball_ = Ball2D{};
    double ang = rng.uniform(-kPi, kPi);
    ball_.velocity = Vec2{std::cos(ang), std::sin(ang)} * rng.uniform(0.0, 1.0);
    double tdir = rng.uniform(-kPi, kPi);
    target_dist_ = short_kick_ ? rng.uniform(3.0, 9.0) : 9.0;
    target_ = ball_.position + Vec2{std::cos(tdir), std::sin(tdir)} * target_dist_;
    double tol = env_detail::rad(short_kick_ ? 10.0 : 5.0);
    double heading = tdir + rng.uniform(-tol, tol);
    Vec2 back = Vec2{std::cos(tdir), std::sin(tdir)} * (-(0.20 + rng.uniform(0.0, 0.04)));
    Vec2 lateral = Vec2{-std::sin(tdir), std::cos(tdir)} * rng.uniform(-0.02, 0.02);
    body_.reset(ball_.position + back + lateral, heading);
    initial_dist_ = (ball_.position - target_).norm();
    ball_body_hist_[0] = ball_body_hist_[1] = ball_body();
    ballz_hist_[0] = ballz_hist_[1] = ball_z_body();
    step_index_ = 0;
    return build_obs();
  }

  StepResult step(std::span<const double> action, Rng&) override {
    if (static_cast<int>(action.size()) != action_size())
      throw std::invalid_argument("KickEnv: action dimension mismatch");
    ++step_index_;
    body_.drive(action, {});
    body_.integrate(0.0, 0b01);  // left foot planted, right is the kicking leg
    ball_roll(ball_);
    push_ball_contact(ball_, body_.position(), body_.velocity_world());
    auto feet = body_.foot_world();
    auto foot_v = body_.foot_velocity_world();
    for (int leg = 0; leg < 2; ++leg) kick_contact(feet[leg], foot_v[leg]);

    ball_body_hist_[0] = ball_body_hist_[1];
    ball_body_hist_[1] = ball_body();
    ballz_hist_[0] = ballz_hist_[1];
    ballz_hist_[1] = ball_z_body();

    StepResult out;
    out.done = step_index_ >= (short_kick_ ? 10 : 16);
    if (out.done) {
      Ball2D settled = ball_;
      out.reward = kick_reward(initial_dist_, (ball_rest_position(settled) - target_).norm());
    }
    out.observation = build_obs();
    return out;
  }

  void reflect_world() override {
    body_.mirror();
    ball_.position.y = -ball_.position.y;
    ball_.velocity.y = -ball_.velocity.y;
    target_.y = -target_.y;
    for (auto& b : ball_body_hist_) b.y = -b.y;
  }

  nlohmann::json save_state() const override {
    nlohmann::json j;
    j["body"] = body_.to_json();
    j["ball_pos"] = env_detail::vec_json(ball_.position);
    j["ball_vel"] = env_detail::vec_json(ball_.velocity);
    j["target"] = env_detail::vec_json(target_);
    j["target_dist"] = target_dist_;
    j["initial_dist"] = initial_dist_;
    j["ball_hist"] = {env_detail::vec_json(ball_body_hist_[0]), env_detail::vec_json(ball_body_hist_[1])};
    j["ballz_hist"] = ballz_hist_;
    j["step_index"] = step_index_;
    return j;
  }
  void load_state(const nlohmann::json& j) override {
    body_.load_json(j.at("body"));
    ball_.position = env_detail::vec_from(j.at("ball_pos"));
    ball_.velocity = env_detail::vec_from(j.at("ball_vel"));
    target_ = env_detail::vec_from(j.at("target"));
    target_dist_ = j.at("target_dist").get<double>();
    initial_dist_ = j.at("initial_dist").get<double>();
    ball_body_hist_ = {env_detail::vec_from(j.at("ball_hist").at(0)),
                       env_detail::vec_from(j.at("ball_hist").at(1))};
    ballz_hist_ = env_detail::arr_from<2>(j.at("ballz_hist"));
    step_index_ = j.at("step_index").get<std::int64_t>();
  }

  std::vector<double> current_observation() const override { return build_obs(); }

  nlohmann::json replay_record() const override {
    return {{"agent", env_detail::vec_json(body_.position())},
            {"heading", body_.heading()},
            {"ball", env_detail::vec_json(ball_.position)},
            {"target", env_detail::vec_json(target_)}};
  }

  const Ball2D& ball() const { return ball_; }
  const Vec2& target() const { return target_; }

 private:
  void kick_contact(const Vec2& foot, const Vec2& foot_vel) {
    Vec2 off = ball_.position - foot;
    double d = off.norm();
    if (d >= kFootRadius) return;
    Vec2 n = d > 1e-12 ? off * (1.0 / d) : Vec2{1.0, 0.0};
    ball_.position = foot + n * kFootRadius;
    double rel = (foot_vel - ball_.velocity).dot(n);
    if (rel > 0.0) ball_.velocity += n * (rel * kKickTransfer);
  }

  Vec2 ball_body() const { return (ball_.position - body_.position()).rotated(-body_.heading()); }
  double ball_z_body() const { return 0.02 - body_.z(); }
  double ball_dist() const {
    Vec2 b = ball_body();
    double z = ball_z_body();
    return std::sqrt(b.x * b.x + b.y * b.y + z * z);
  }

  std::vector<double> build_obs() const {
    const BodySensors& s = body_.sensors();
    Vec2 b = ball_body_hist_[1];
    Vec2 t = (target_ - body_.position()).rotated(-body_.heading());
    std::vector<double> o;
    o.reserve(observation_size());
    o.push_back(0.01 * static_cast<double>(step_index_));
    o.push_back(s.z);
    o.push_back(s.dz);
    o.push_back(s.roll);
    o.push_back(s.pitch);
    o.insert(o.end(), s.gyro.begin(), s.gyro.end());
    o.insert(o.end(), s.acc.begin(), s.acc.end());
    o.insert(o.end(), s.feet.begin(), s.feet.end());
    o.insert(o.end(), s.joints.begin(), s.joints.end());
    o.insert(o.end(), s.djoints.begin(), s.djoints.end());
    o.push_back(b.x);
    o.push_back(b.y);
    o.push_back(ballz_hist_[1]);
    o.push_back((ball_body_hist_[1].x - ball_body_hist_[0].x) / 0.04);
    o.push_back((ball_body_hist_[1].y - ball_body_hist_[0].y) / 0.04);
    o.push_back((ballz_hist_[1] - ballz_hist_[0]) / 0.04);
    o.push_back(ball_dist());
    o.push_back(std::atan2(t.y, t.x));
    if (short_kick_) o.push_back(t.norm());
    return o;
  }

  static constexpr double kFootRadius = 0.10;
  static constexpr double kKickTransfer = 2.2;

  bool short_kick_;
  DeskBody body_;
  Ball2D ball_{};
  Vec2 target_{};
  double target_dist_ = 0.0;
  double initial_dist_ = 0.0;
  std::array<Vec2, 2> ball_body_hist_{};
  std::array<double, 2> ballz_hist_{};
  std::int64_t step_index_ = 0;
};

// ---------------------------------------------------------------------------
// Sprint family. The policy sees a front/back relabeled body: whenever the
// right leg leads, observations and actions are mirrored, so one network
// drives both strides. A fixed 14-step cycle primitive supplies the gait for
// the rotate and kick stages; sprint-forward instead carries its initial
// bent-knee pose as a permanent bias.

inline std::array<double, 6> sprint_start_pose() {
  auto ik = planar_two_link_ik(0.0, -0.40, 0.25, 0.25);
  return {ik.theta1, ik.theta2, ik.theta1, ik.theta2, 0.0, 0.0};
}

inline const PrimitiveTable& sprint_cycle_primitive() {
  static const PrimitiveTable table = [] {
    std::vector<std::vector<double>> rows;
    for (int t = 0; t < 14; ++t) {
      double u = static_cast<double>(t) / 13.0;
      double swing_x = -0.08 * std::cos(kPi * u);
      double swing_z = -0.40 + 0.04 * std::sin(kPi * u);
      double stance_x = 0.08 * std::cos(kPi * u);
      auto left = planar_two_link_ik(swing_x, swing_z, 0.25, 0.25);
      auto right = planar_two_link_ik(stance_x, -0.40, 0.25, 0.25);
      double sh = 0.3 * std::cos(kPi * u);
      rows.push_back({left.theta1, left.theta2, right.theta1, right.theta2, -sh, sh});
    }
    return PrimitiveTable::from_rows(rows);
  }();
  return table;
}

enum class SprintKind { kForward, kRotate, kKick };

class SprintEnv : public Environment {
 public:
  explicit SprintEnv(SprintKind kind) : kind_(kind), body_("srk", sprint_tuning()) {}

  int observation_size() const override {
    switch (kind_) {
      case SprintKind::kForward: return 51;
      case SprintKind::kRotate: return 52;
      case SprintKind::kKick: return 54;
    }
    return 0;
  }
  int action_size() const override { return 6; }

  std::vector<double> reset(Rng& rng) override {
    body_.reset_with_joints({0.0, 0.0}, 0.0, sprint_start_pose());
    side_ = Leg::kLeft;
    count_ = 0;
    step_index_ = 0;
    x_hist_.fill(0.0);
    td_ = 0.0;
    if (kind_ == SprintKind::kForward) {
      return build_obs();
    }
    run_primitive_steps(70);  // sprint-forward warmup, 1.4 s
    if (kind_ == SprintKind::kRotate) {
      td_ = body_.heading() + env_detail::rad(rng.uniform(-10.0, 10.0));
      return build_obs();
    }
    double ang = rng.uniform(-kPi / 6.0, kPi / 6.0);
    double dist = rng.uniform(2.0, 4.0);
    ball_ = Ball2D{};
    ball_.position = body_.position() + Vec2{std::cos(body_.heading() + ang), std::sin(body_.heading() + ang)} * dist;
    PointAgent runner;
    runner.position = body_.position();
    runner.heading = body_.heading();
    runner.velocity = body_.velocity_world();
    int guard = 0;
    while ((ball_.position - runner.position).norm() >= 0.35 && guard++ < 2000)
      simplified_locomotion(runner, ball_.position, kEnvDt);
    body_.reset_with_joints(runner.position, runner.heading, sprint_start_pose());
    side_ = Leg::kLeft;
    count_ = 0;
    kick_dir_ = (ball_.position - body_.position()).normalized();
    step_index_ = 0;
    return build_obs();
  }

  StepResult step(std::span<const double> action, Rng& rng) override {
    if (static_cast<int>(action.size()) != action_size())
      throw std::invalid_argument("SprintEnv: action dimension mismatch");
    ++step_index_;
    if (kind_ == SprintKind::kRotate && step_index_ > 1 && step_index_ % 14 == 1)
      td_ = body_.heading() + env_detail::rad(rng.uniform(-10.0, 10.0));
    drive_once(action);

    if (kind_ == SprintKind::kKick) {
      ball_roll(ball_);
      push_ball_contact(ball_, body_.position(), body_.velocity_world());
      auto feet = body_.foot_world();
      auto foot_v = body_.foot_velocity_world();
      for (int leg = 0; leg < 2; ++leg) {
        Vec2 off = ball_.position - feet[leg];
        double d = off.norm();
        if (d >= 0.10) continue;
        Vec2 n = d > 1e-12 ? off * (1.0 / d) : Vec2{1.0, 0.0};
        ball_.position = feet[leg] + n * 0.10;
        double rel = (foot_v[leg] - ball_.velocity).dot(n);
        if (rel > 0.0) ball_.velocity += n * (rel * 2.2);
      }
    }

    for (int i = 3; i > 0; --i) x_hist_[i] = x_hist_[i - 1];
    x_hist_[0] = body_.position().x;

    StepResult out;
    switch (kind_) {
      case SprintKind::kForward:
        if (step_index_ % kVisionCycleSteps == 0 && step_index_ >= 3)
          out.reward = sprint_fwd_reward(x_hist_[0] - x_hist_[3]);
        out.done = body_.z() < 0.27 || step_index_ >= 200;
        break;
      case SprintKind::kRotate: {
        double err = std::abs(env_detail::deg(env_detail::wrap_pi(td_ - body_.heading())));
        out.reward = sprint_rotate_reward(body_.velocity_world().norm(), err);
        out.done = body_.z() < 0.34 || step_index_ >= 350;
        break;
      }
      case SprintKind::kKick:
        out.done = body_.z() < 0.33 || step_index_ >= 20;
        if (out.done) out.reward = sprint_kick_reward(kick_dir_, ball_.velocity);
        break;
    }
    out.observation = build_obs();
    return out;
  }

  SymmetrySpec observation_symmetry() const override { return manifest(kind_).concat(); }
  SymmetrySpec action_symmetry() const override { return env_detail::joints6_spec(); }

  static SymmetryManifest manifest(SprintKind kind) {
    using namespace env_detail;
    SymmetryManifest m;
    m.blocks = {{"step", scalar_spec(1)},  {"count", scalar_spec(1)}, {"z", scalar_spec(1)},
                {"gyro", gyro_spec()},     {"dgyro", gyro_spec()},    {"acc", acc_spec()},
                {"dacc", acc_spec()},      {"feet", feet_spec()},     {"dfeet", feet_spec()},
                {"joints", joints6_spec()}, {"djoints", joints6_spec()}};
    if (kind == SprintKind::kRotate) m.blocks.push_back({"target", scalar_spec(-1)});
    if (kind == SprintKind::kKick) m.blocks.push_back({"ball", ball3_spec()});
    return m;
  }

  void reflect_world() override {
    body_.mirror();
    side_ = other(side_);
    td_ = -td_;
    ball_.position.y = -ball_.position.y;
    ball_.velocity.y = -ball_.velocity.y;
    kick_dir_.y = -kick_dir_.y;
  }

  nlohmann::json save_state() const override {
    nlohmann::json j;
    j["body"] = body_.to_json();
    j["side"] = static_cast<int>(side_);
    j["count"] = count_;
    j["step_index"] = step_index_;
    j["x_hist"] = x_hist_;
    j["td"] = td_;
    j["ball_pos"] = env_detail::vec_json(ball_.position);
    j["ball_vel"] = env_detail::vec_json(ball_.velocity);
    j["kick_dir"] = env_detail::vec_json(kick_dir_);
    return j;
  }
  void load_state(const nlohmann::json& j) override {
    body_.load_json(j.at("body"));
    side_ = static_cast<Leg>(j.at("side").get<int>());
    count_ = j.at("count").get<std::int64_t>();
    step_index_ = j.at("step_index").get<std::int64_t>();
    x_hist_ = env_detail::arr_from<4>(j.at("x_hist"));
    td_ = j.at("td").get<double>();
    ball_.position = env_detail::vec_from(j.at("ball_pos"));
    ball_.velocity = env_detail::vec_from(j.at("ball_vel"));
    kick_dir_ = env_detail::vec_from(j.at("kick_dir"));
  }

  std::vector<double> current_observation() const override { return build_obs(); }

  nlohmann::json replay_record() const override {
    nlohmann::json j{{"agent", env_detail::vec_json(body_.position())}, {"heading", body_.heading()}};
    if (kind_ == SprintKind::kKick) j["ball"] = env_detail::vec_json(ball_.position);
    return j;
  }

  Leg leading_side() const { return side_; }
  const DeskBody& body() const { return body_; }

 private:
  static DeskBody::Tuning sprint_tuning() {
    DeskBody::Tuning t;
    t.effort_reference = 30.0;
    return t;
  }

  void drive_once(std::span<const double> action) {
    bool mirrored = side_ == Leg::kRight;
    std::span<const double> row = query_primitive(sprint_cycle_primitive(), count_);
    std::vector<double> prim;
    if (kind_ == SprintKind::kForward) {
      auto pose = sprint_start_pose();
      prim.assign(pose.begin(), pose.end());
    } else if (mirrored) {
      prim = apply_symmetry(env_detail::joints6_spec(), row);
    } else {
      prim.assign(row.begin(), row.end());
    }
    body_.drive(action, prim, {}, 1.0, mirrored);
    int mask = 0;
    auto fk = body_.ankle_fk();
    for (int leg = 0; leg < 2; ++leg)
      if (fk[leg].y < -0.38) mask |= 1 << leg;
    body_.integrate(0.0, mask);
    ++count_;
    if (count_ >= 14) {
      count_ = 0;
      side_ = other(side_);
    }
  }

  void run_primitive_steps(int n) {
    std::array<double, 6> zero{};
    for (int i = 0; i < n; ++i) drive_once(zero);
  }

  std::vector<double> build_obs() const {
    const BodySensors& s = body_.sensors();
    std::vector<double> o;
    o.reserve(observation_size());
    std::int64_t cap = kind_ == SprintKind::kKick ? step_index_ : std::min<std::int64_t>(step_index_, 93);
    o.push_back(0.01 * static_cast<double>(cap));
    o.push_back(0.01 * static_cast<double>(count_));
    o.push_back(s.z);
    o.insert(o.end(), s.gyro.begin(), s.gyro.end());
    o.insert(o.end(), s.dgyro.begin(), s.dgyro.end());
    o.insert(o.end(), s.acc.begin(), s.acc.end());
    o.insert(o.end(), s.dacc.begin(), s.dacc.end());
    o.insert(o.end(), s.feet.begin(), s.feet.end());
    o.insert(o.end(), s.dfeet.begin(), s.dfeet.end());
    o.insert(o.end(), s.joints.begin(), s.joints.end());
    o.insert(o.end(), s.djoints.begin(), s.djoints.end());
    if (kind_ == SprintKind::kRotate)
      o.push_back(env_detail::wrap_pi(td_ - body_.heading()));
    if (kind_ == SprintKind::kKick) {
      Vec2 b = (ball_.position - body_.position()).rotated(-body_.heading());
      o.push_back(b.x);
      o.push_back(b.y);
      o.push_back(0.02 - body_.z());
    }
    if (side_ == Leg::kRight) return apply_symmetry(observation_symmetry(), o);
    return o;
  }

  SprintKind kind_;
  DeskBody body_;
  Leg side_ = Leg::kLeft;
  std::int64_t count_ = 0;
  std::int64_t step_index_ = 0;
  std::array<double, 4> x_hist_{};
  double td_ = 0.0;
  Ball2D ball_{};
  Vec2 kick_dir_{1.0, 0.0};
};

// ---------------------------------------------------------------------------
// Point-mass walk: the same target machinery and reward as the full walk on
// the simplified agent model. Small enough to train in minutes, with full
// mirror structure for the symmetry losses.

class PointWalkEnv : public Environment {
 public:
  int observation_size() const override { return 8; }
  int action_size() const override { return 3; }

  std::vector<double> reset(Rng& rng) override {
    agent_ = PointAgent{};
    agent_.heading = rng.uniform(-kPi, kPi);
    double ang = rng.uniform(-kPi, kPi);
    tp_ = Vec2{std::cos(ang), std::sin(ang)} * rng.uniform(2.0, 4.0);
    double va = rng.uniform(-kPi, kPi);
    tp_vel_ = Vec2{std::cos(va), std::sin(va)} * rng.uniform(0.0, 0.3);
    tp_timer_ = rng.exponential(1.6);
    targp_filter_ = {0.5, 0.014};
    targp_filter_.reset_to(tp_body());
    targdir_filter_ = {45.0, 1.6};
    targdir_filter_.reset_to(heading_error_deg());
    targp_prev_ = targp_filter_.value;
    step_index_ = 0;
    cycle_dist_ = (tp_ - agent_.position).norm();
    cycle_pos_ = agent_.position;
    return build_obs();
  }

  StepResult step(std::span<const double> action, Rng& rng) override {
    if (static_cast<int>(action.size()) != action_size())
      throw std::invalid_argument("PointWalkEnv: action dimension mismatch");
    ++step_index_;
    tp_timer_ -= kEnvDt;
    if (tp_timer_ <= 0.0) {
      double va = rng.uniform(-kPi, kPi);
      tp_vel_ = Vec2{std::cos(va), std::sin(va)} * rng.uniform(0.0, 0.3);
      tp_timer_ = rng.exponential(1.6);
    }
    tp_ += tp_vel_ * kEnvDt;
    if (std::abs(tp_.x) > kWorkAreaHalf || std::abs(tp_.y) > kWorkAreaHalf) tp_ = {0.0, 0.0};
    targp_prev_ = targp_filter_.value;
    targp_filter_.update(tp_body());
    targdir_filter_.update(heading_error_deg());

    Vec2 acc_body{std::clamp(action[0], -1.0, 1.0) * kLocoAccelMax,
                  std::clamp(action[1], -1.0, 1.0) * kLocoAccelMax};
    agent_.acceleration = acc_body.rotated(agent_.heading);
    agent_.velocity += agent_.acceleration * kEnvDt;
    double vn = agent_.velocity.norm();
    if (vn > kLocoSpeedMax) agent_.velocity = agent_.velocity * (kLocoSpeedMax / vn);
    agent_.position += agent_.velocity * kEnvDt;
    agent_.heading =
        env_detail::wrap_pi(agent_.heading + std::clamp(action[2], -1.0, 1.0) * kTurnRate * kEnvDt);

    StepResult out;
    if (step_index_ % kVisionCycleSteps == 0) {
      double d_now = (tp_ - agent_.position).norm();
      double progress = cycle_dist_ - d_now;
      double err = std::abs(heading_error_deg());
      double move = (agent_.position - cycle_pos_).norm() / kVisionCycleSteps;
      out.reward = walk_reward(progress, err, d_now, move);
      cycle_dist_ = d_now;
      cycle_pos_ = agent_.position;
    }
    out.done = step_index_ >= kMaxSteps;
    out.observation = build_obs();
    return out;
  }

  SymmetrySpec observation_symmetry() const override {
    using namespace env_detail;
    SymmetryManifest m;
    m.blocks = {{"vel", vec2_spec()},
                {"targp", vec2_spec()},
                {"targv", vec2_spec()},
                {"targdir", scalar_spec(-1)},
                {"dist", scalar_spec(1)}};
    return m.concat();
  }
  SymmetrySpec action_symmetry() const override { return {{0, 1, 2}, {1.0, -1.0, -1.0}}; }

  void reflect_world() override {
    agent_.position.y = -agent_.position.y;
    agent_.velocity.y = -agent_.velocity.y;
    agent_.acceleration.y = -agent_.acceleration.y;
    agent_.heading = -agent_.heading;
    tp_.y = -tp_.y;
    tp_vel_.y = -tp_vel_.y;
    targp_filter_.value.y = -targp_filter_.value.y;
    targp_prev_.y = -targp_prev_.y;
    targdir_filter_.value = -targdir_filter_.value;
    cycle_pos_.y = -cycle_pos_.y;
  }

  nlohmann::json save_state() const override {
    nlohmann::json j;
    j["pos"] = env_detail::vec_json(agent_.position);
    j["vel"] = env_detail::vec_json(agent_.velocity);
    j["acc"] = env_detail::vec_json(agent_.acceleration);
    j["heading"] = agent_.heading;
    j["tp"] = env_detail::vec_json(tp_);
    j["tp_vel"] = env_detail::vec_json(tp_vel_);
    j["tp_timer"] = tp_timer_;
    j["targp_filter"] = targp_filter_.to_json();
    j["targdir_filter"] = targdir_filter_.to_json();
    j["targp_prev"] = env_detail::vec_json(targp_prev_);
    j["step_index"] = step_index_;
    j["cycle_dist"] = cycle_dist_;
    j["cycle_pos"] = env_detail::vec_json(cycle_pos_);
    return j;
  }
  void load_state(const nlohmann::json& j) override {
    agent_.position = env_detail::vec_from(j.at("pos"));
    agent_.velocity = env_detail::vec_from(j.at("vel"));
    agent_.acceleration = env_detail::vec_from(j.at("acc"));
    agent_.heading = j.at("heading").get<double>();
    tp_ = env_detail::vec_from(j.at("tp"));
    tp_vel_ = env_detail::vec_from(j.at("tp_vel"));
    tp_timer_ = j.at("tp_timer").get<double>();
    targp_filter_ = VectorRateLimiter::from_json(j.at("targp_filter"));
    targdir_filter_ = ScalarRateLimiter::from_json(j.at("targdir_filter"));
    targp_prev_ = env_detail::vec_from(j.at("targp_prev"));
    step_index_ = j.at("step_index").get<std::int64_t>();
    cycle_dist_ = j.at("cycle_dist").get<double>();
    cycle_pos_ = env_detail::vec_from(j.at("cycle_pos"));
  }

  std::vector<double> current_observation() const override { return build_obs(); }

  nlohmann::json replay_record() const override {
    return {{"agent", env_detail::vec_json(agent_.position)},
            {"heading", agent_.heading},
            {"target", env_detail::vec_json(tp_)}};
  }

  const PointAgent& agent() const { return agent_; }

 private:
  static constexpr double kTurnRate = 1.5;  // rad/s
  static constexpr std::int64_t kMaxSteps = 400;

  Vec2 tp_body() const { return (tp_ - agent_.position).rotated(-agent_.heading); }
  double heading_error_deg() const {
    Vec2 d = tp_ - agent_.position;
    return env_detail::deg(env_detail::wrap_pi(std::atan2(d.y, d.x) - agent_.heading));
  }

  std::vector<double> build_obs() const {
    Vec2 vb = agent_.velocity.rotated(-agent_.heading);
    std::vector<double> o;
    o.reserve(8);
    o.push_back(vb.x);
    o.push_back(vb.y);
    o.push_back(targp_filter_.value.x);
    o.push_back(targp_filter_.value.y);
    o.push_back((targp_filter_.value.x - targp_prev_.x) / kEnvDt);
    o.push_back((targp_filter_.value.y - targp_prev_.y) / kEnvDt);
    o.push_back(env_detail::rad(targdir_filter_.value));
    o.push_back(std::min((tp_ - agent_.position).norm(), 10.0));
    return o;
  }

  PointAgent agent_{};
  Vec2 tp_{};
  Vec2 tp_vel_{};
  double tp_timer_ = 0.0;
  VectorRateLimiter targp_filter_{0.5, 0.014};
  ScalarRateLimiter targdir_filter_{45.0, 1.6};
  Vec2 targp_prev_{};
  std::int64_t step_index_ = 0;
  double cycle_dist_ = 0.0;
  Vec2 cycle_pos_{};
};

// ---------------------------------------------------------------------------

inline std::unique_ptr<Environment> make_environment(const std::string& kind) {
  if (kind == "walk") return std::make_unique<WalkEnv>();
  if (kind == "dribble_v1") return std::make_unique<DribbleEnv>(false);
  if (kind == "dribble_v2") return std::make_unique<DribbleEnv>(true);
  if (kind == "kick_short") return std::make_unique<KickEnv>(true);
  if (kind == "kick_long") return std::make_unique<KickEnv>(false);
  if (kind == "sprint_fwd") return std::make_unique<SprintEnv>(SprintKind::kForward);
  if (kind == "sprint_rotate") return std::make_unique<SprintEnv>(SprintKind::kRotate);
  if (kind == "sprint_kick") return std::make_unique<SprintEnv>(SprintKind::kKick);
  if (kind == "point_walk") return std::make_unique<PointWalkEnv>();
  throw std::invalid_argument("make_environment: unknown environment kind '" + kind + "'");
}

inline const std::vector<std::string>& single_agent_env_kinds() {
  static const std::vector<std::string> kinds = {
      "walk",       "dribble_v1", "dribble_v2",    "kick_short", "kick_long",
      "sprint_fwd", "sprint_rotate", "sprint_kick", "point_walk"};
  return kinds;
}

}  // namespace symrl
