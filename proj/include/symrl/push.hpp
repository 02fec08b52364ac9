// Two-team ball-advance drill on a desk-scale pitch: a low-level walker is
// embodied at the closest field player and pushes the ball along a direction
// chosen by a high-level policy that reads a radar frame every 16 control
// ticks. Both policies train with the shared clipped-surrogate machinery.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <symrl/common.hpp>
#include <symrl/envs.hpp>
#include <symrl/ppo.hpp>
#include <symrl/radar.hpp>
#include <symrl/symmetry.hpp>

namespace symrl {

inline constexpr double kFieldHalfX = 12.0;
inline constexpr double kFieldHalfY = 9.0;
inline constexpr int kHlPeriodTicks = 16;       // high-level decision every 0.32 s
inline constexpr double kActiveSeparation = 0.5; // the two contesting players cannot overlap
inline constexpr double kApproachStandoff = 0.45;
inline constexpr double kApproachArrive = 0.12;
inline constexpr double kPushTargetLead = 0.4;  // low-level target point ahead of the ball
inline constexpr std::int64_t kPushLlMaxSteps = 400;
// The defenders are ideal point navigators while our side pays the cost of an
// embodied gait, so they jog rather than sprint to keep the drill contestable.
inline constexpr double kOpponentPace = 0.6;
// The walker stays embodied until the ball is genuinely out of reach; a single
// solid push should not bounce control back to the approach planner.
inline constexpr double kPushBallLost = 1.0;

// Kickoff formations relative to the ball; index 9 is the keeper at a fixed
// post. Our nearest player starts 1.70 m out, theirs 2.69 m, so the embodied
// walker wins the first touch at equal foot speed.
inline const std::array<Vec2, 9>& our_formation() {
  static const std::array<Vec2, 9> f = {{{-1.5, 0.8},
                                         {-1.5, -0.8},
                                         {-2.5, 1.8},
                                         {-2.5, -1.8},
                                         {-3.5, 0.0},
                                         {-5.0, 2.5},
                                         {-5.0, -2.5},
                                         {-7.0, 0.0},
                                         {-9.0, 1.5}}};
  return f;
}
inline const std::array<Vec2, 9>& their_formation() {
  static const std::array<Vec2, 9> f = {{{2.5, 1.0},
                                         {2.5, -1.0},
                                         {4.0, 2.0},
                                         {4.0, -2.0},
                                         {5.0, 0.0},
                                         {6.5, 2.5},
                                         {6.5, -2.5},
                                         {8.0, 0.0},
                                         {9.5, 1.5}}};
  return f;
}

class PushArena {
 public:
  PushArena() : core_("push_ll", StepBaselineParams::push()) {}

  static constexpr int kLlObsSize = 50;
  static constexpr int kLlActSize = 6;

  void reset(Rng& rng) {
    ball_ = Ball2D{};
    ball_.position = {rng.uniform(-3.0, 0.0), rng.uniform(-4.0, 4.0)};
    for (int i = 0; i < 9; ++i) {
      ours_[i] = PointAgent{};
      ours_[i].position = clamp_to_field(ball_.position + our_formation()[i]);
      theirs_[i] = PointAgent{};
      theirs_[i].position = clamp_to_field(ball_.position + their_formation()[i]);
    }
    ours_[9] = PointAgent{};
    ours_[9].position = {-11.0, 0.0};
    theirs_[9] = PointAgent{};
    theirs_[9].position = {11.0, 0.0};
    for (auto& p : ours_) p.heading = bearing(p.position, ball_.position);
    for (auto& p : theirs_) p.heading = bearing(p.position, ball_.position);
    our_active_ = closest_index(ours_);
    their_active_ = closest_index(theirs_);
    approaching_ = true;
    tick_ = 0;
    ll_step_ = 0;
    targdir_filter_ = ScalarRateLimiter{90.0, 30.0};
    targdir_filter_.reset_to(0.0);
    u_world_ = goal_dir();
    window_start_dist_ = goal_dist();
    ball_body_hist_ = {};
    ballz_hist_ = {};
  }

  // --- high-level side -------------------------------------------------

  bool hl_boundary() const { return tick_ % kHlPeriodTicks == 0; }

  std::vector<double> hl_observation() const {
    RadarScene scene;
    scene.ball = ball_.position;
    scene.objective = goal_dir();
    for (int i = 0; i < 10; ++i) {
      if (i != our_active_) scene.teammates.push_back(ours_[i].position);
      scene.opponents.push_back(theirs_[i].position);
    }
    scene.targdir_deg = targdir_filter_.value;
    return encode(radar_, scene);
  }

  // One scalar in [-1, 1]: the requested push heading as a fraction of the
  // filter's 90 degree authority, relative to the ball-to-goal line.
  void apply_hl(double action) {
    targdir_filter_.update(std::clamp(action, -1.0, 1.0) * 90.0);
    u_world_ = goal_dir().rotated(env_detail::rad(targdir_filter_.value));
    window_start_dist_ = goal_dist();
  }

  struct WindowScore {
    double reward = 0.0;
    double progress_term = 0.0;
  };
  WindowScore window_score() const {
    double progress = window_start_dist_ - goal_dist();
    WindowScore s;
    s.reward = push_hl_reward(progress, closest_dist(theirs_), closest_dist(ours_));
    s.progress_term = std::clamp(progress * 0.15, -0.02, 0.02);
    return s;
  }

  SymmetrySpec hl_observation_symmetry() const { return reflection_spec(radar_); }
  static SymmetrySpec hl_action_symmetry() { return {{0}, {-1.0}}; }

  // --- low-level side --------------------------------------------------

  bool ll_active() const { return !approaching_; }

  std::vector<double> ll_observation() const {
    if (approaching_) throw std::logic_error("PushArena: no low-level observation while approaching");
    return build_ll_obs();
  }

  static SymmetryManifest ll_manifest() {
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
                {"targp", vec2_spec()},     {"opp", vec2_spec()}};
    return m;
  }
  SymmetrySpec ll_observation_symmetry() const { return ll_manifest().concat(); }
  static SymmetrySpec ll_action_symmetry() { return env_detail::joints6_spec(); }

  // --- world step ------------------------------------------------------

  struct TickResult {
    bool ll_stepped = false;
    double ll_reward = 0.0;
    bool ll_done = false;
    bool hl_over = false;
  };

  // Advance one control period. `ll_action` is consumed only when the walker
  // is embodied; during an approach the active slot navigates on rails.
  TickResult tick(std::span<const double> ll_action) {
    TickResult out;
    if (approaching_) {
      Vec2 target = ball_.position - u_world_ * kApproachStandoff;
      PointAgent& me = ours_[our_active_];
      simplified_locomotion(me, target, kEnvDt);
      if ((me.position - target).norm() < kApproachArrive) {
        core_.reset(me.position, std::atan2(u_world_.y, u_world_.x));
        // lead with the foot on the ball's side so a mirrored pitch yields a
        // mirrored gait
        if (ball_body().y < 0.0) core_.phase.swing = other(core_.phase.swing);
        ours_[our_active_].velocity = {};
        approaching_ = false;
        ll_step_ = 0;
        seed_ball_hist();
      }
    } else {
      if (static_cast<int>(ll_action.size()) != kLlActSize)
        throw std::invalid_argument("PushArena: low-level action dimension mismatch");
      ++ll_step_;
      core_.advance(ll_action, {}, 1.0);
      ours_[our_active_].position = core_.body.position();
      ours_[our_active_].velocity = core_.body.velocity_world();
      ours_[our_active_].heading = core_.body.heading();
      out.ll_stepped = true;
    }

    their_active_ = closest_index(theirs_);
    Vec2 push_through = ball_.position + toward(ball_.position, Vec2{-kFieldHalfX, 0.0}) * 0.05;
    simplified_locomotion(theirs_[their_active_], push_through, kEnvDt, kOpponentPace);

    ball_roll(ball_);
    push_ball_contact(ball_, ours_[our_active_].position, ours_[our_active_].velocity);
    push_ball_contact(ball_, theirs_[their_active_].position, theirs_[their_active_].velocity);
    separate_actives();

    if (out.ll_stepped) {
      update_ball_hist();
      double speed = ball_.velocity.norm();
      double err = speed > 1e-12
                       ? std::abs(env_detail::wrap_pi(std::atan2(ball_.velocity.y, ball_.velocity.x) -
                                                      std::atan2(u_world_.y, u_world_.x)))
                       : 0.0;
      out.ll_reward = push_ll_reward(speed, err);
      out.ll_done = core_.body.z() < 0.40 || ll_step_ >= kPushLlMaxSteps ||
                    planar_ball_dist() > kPushBallLost || teammate_closer();
    }
    out.hl_over = std::abs(ball_.position.x) > kFieldHalfX || std::abs(ball_.position.y) > kFieldHalfY;
    if (out.hl_over && out.ll_stepped) out.ll_done = true;
    if (out.ll_done) {
      approaching_ = true;
      our_active_ = closest_index(ours_);
    }
    ++tick_;
    return out;
  }

  // Mirror the whole pitch about the x axis; used by the symmetry suites.
  void reflect_world() {
    core_.mirror();
    ball_.position.y = -ball_.position.y;
    ball_.velocity.y = -ball_.velocity.y;
    for (auto& p : ours_) flip(p);
    for (auto& p : theirs_) flip(p);
    targdir_filter_.value = -targdir_filter_.value;
    u_world_.y = -u_world_.y;
    for (auto& b : ball_body_hist_) b.y = -b.y;
  }

  nlohmann::json save_state() const {
    nlohmann::json j;
    j["core"] = core_.to_json();
    j["ball_pos"] = env_detail::vec_json(ball_.position);
    j["ball_vel"] = env_detail::vec_json(ball_.velocity);
    j["ours"] = agents_json(ours_);
    j["theirs"] = agents_json(theirs_);
    j["our_active"] = our_active_;
    j["their_active"] = their_active_;
    j["approaching"] = approaching_;
    j["tick"] = tick_;
    j["ll_step"] = ll_step_;
    j["targdir_filter"] = targdir_filter_.to_json();
    j["u_world"] = env_detail::vec_json(u_world_);
    j["window_start_dist"] = window_start_dist_;
    j["ball_hist"] = {env_detail::vec_json(ball_body_hist_[0]), env_detail::vec_json(ball_body_hist_[1])};
    j["ballz_hist"] = ballz_hist_;
    return j;
  }
  void load_state(const nlohmann::json& j) {
    core_.load_json(j.at("core"));
    ball_.position = env_detail::vec_from(j.at("ball_pos"));
    ball_.velocity = env_detail::vec_from(j.at("ball_vel"));
    agents_from_json(j.at("ours"), ours_);
    agents_from_json(j.at("theirs"), theirs_);
    our_active_ = j.at("our_active").get<int>();
    their_active_ = j.at("their_active").get<int>();
    approaching_ = j.at("approaching").get<bool>();
    tick_ = j.at("tick").get<std::int64_t>();
    ll_step_ = j.at("ll_step").get<std::int64_t>();
    targdir_filter_ = ScalarRateLimiter::from_json(j.at("targdir_filter"));
    u_world_ = env_detail::vec_from(j.at("u_world"));
    window_start_dist_ = j.at("window_start_dist").get<double>();
    ball_body_hist_ = {env_detail::vec_from(j.at("ball_hist").at(0)),
                       env_detail::vec_from(j.at("ball_hist").at(1))};
    ballz_hist_ = env_detail::arr_from<2>(j.at("ballz_hist"));
  }

  nlohmann::json replay_record() const {
    nlohmann::json ours = nlohmann::json::array();
    for (const auto& p : ours_) ours.push_back(env_detail::vec_json(p.position));
    nlohmann::json theirs = nlohmann::json::array();
    for (const auto& p : theirs_) theirs.push_back(env_detail::vec_json(p.position));
    return {{"ball", env_detail::vec_json(ball_.position)},
            {"agent", env_detail::vec_json(ours_[our_active_].position)},
            {"heading", approaching_ ? ours_[our_active_].heading : core_.body.heading()},
            {"approaching", approaching_},
            {"active", our_active_},
            {"u", env_detail::vec_json(u_world_)},
            {"ours", std::move(ours)},
            {"theirs", std::move(theirs)}};
  }

  const Ball2D& ball() const { return ball_; }
  const GaitCore& core() const { return core_; }
  const std::array<PointAgent, 10>& our_team() const { return ours_; }
  const std::array<PointAgent, 10>& their_team() const { return theirs_; }
  int our_active() const { return our_active_; }
  std::int64_t tick_index() const { return tick_; }
  const Vec2& push_direction() const { return u_world_; }
  double filtered_targdir() const { return targdir_filter_.value; }

 private:
  static Vec2 clamp_to_field(const Vec2& p) {
    return {std::clamp(p.x, -kFieldHalfX + 0.5, kFieldHalfX - 0.5),
            std::clamp(p.y, -kFieldHalfY + 0.5, kFieldHalfY - 0.5)};
  }
  static double bearing(const Vec2& from, const Vec2& to) {
    return std::atan2(to.y - from.y, to.x - from.x);
  }
  static Vec2 toward(const Vec2& from, const Vec2& to) {
    Vec2 d = to - from;
    double n = d.norm();
    return n < 1e-9 ? Vec2{1.0, 0.0} : d * (1.0 / n);
  }
  static void flip(PointAgent& p) {
    p.position.y = -p.position.y;
    p.velocity.y = -p.velocity.y;
    p.heading = -p.heading;
  }

  Vec2 goal_dir() const { return toward(ball_.position, Vec2{kFieldHalfX, 0.0}); }
  double goal_dist() const { return (Vec2{kFieldHalfX, 0.0} - ball_.position).norm(); }

  int closest_index(const std::array<PointAgent, 10>& team) const {
    int best = 0;
    double best_d = (team[0].position - ball_.position).norm();
    for (int i = 1; i < 10; ++i) {
      double d = (team[i].position - ball_.position).norm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }
  double closest_dist(const std::array<PointAgent, 10>& team) const {
    double best = (team[0].position - ball_.position).norm();
    for (int i = 1; i < 10; ++i)
      best = std::min(best, (team[i].position - ball_.position).norm());
    return best;
  }
  bool teammate_closer() const {
    double mine = (ours_[our_active_].position - ball_.position).norm();
    for (int i = 0; i < 10; ++i)
      if (i != our_active_ && (ours_[i].position - ball_.position).norm() < mine) return true;
    return false;
  }

  void separate_actives() {
    Vec2 d = ours_[our_active_].position - theirs_[their_active_].position;
    double n = d.norm();
    if (n >= kActiveSeparation) return;
    Vec2 axis = n < 1e-9 ? Vec2{1.0, 0.0} : d * (1.0 / n);
    double push = 0.5 * (kActiveSeparation - n);
    theirs_[their_active_].position += axis * -push;
    if (approaching_) {
      ours_[our_active_].position += axis * push;
    } else {
      core_.body.displace(axis * push);
      ours_[our_active_].position = core_.body.position();
    }
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
  void seed_ball_hist() {
    ball_body_hist_[0] = ball_body_hist_[1] = ball_body();
    ballz_hist_[0] = ballz_hist_[1] = ball_z_body();
  }
  void update_ball_hist() {
    ball_body_hist_[0] = ball_body_hist_[1];
    ball_body_hist_[1] = ball_body();
    ballz_hist_[0] = ballz_hist_[1];
    ballz_hist_[1] = ball_z_body();
  }

  std::vector<double> build_ll_obs() const {
    const BodySensors& s = core_.body.sensors();
    PhaseFeatures pf = phase_features(core_.phase);
    Vec2 b = ball_body_hist_[1];
    Vec2 aim = ball_.position + u_world_ * kPushTargetLead;
    Vec2 targp = (aim - core_.body.position()).rotated(-core_.body.heading());
    Vec2 opp = closest_opponent_body();
    std::vector<double> o;
    o.reserve(kLlObsSize);
    o.push_back(0.01 * static_cast<double>(std::min<std::int64_t>(ll_step_, 96)));
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
    o.push_back(targp.x);
    o.push_back(targp.y);
    o.push_back(opp.x);
    o.push_back(opp.y);
    return o;
  }

  Vec2 closest_opponent_body() const {
    int idx = 0;
    double best = (theirs_[0].position - core_.body.position()).norm();
    for (int i = 1; i < 10; ++i) {
      double d = (theirs_[i].position - core_.body.position()).norm();
      if (d < best) {
        best = d;
        idx = i;
      }
    }
    return (theirs_[idx].position - core_.body.position()).rotated(-core_.body.heading());
  }

  static nlohmann::json agents_json(const std::array<PointAgent, 10>& team) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : team)
      a.push_back({{"pos", env_detail::vec_json(p.position)},
                   {"vel", env_detail::vec_json(p.velocity)},
                   {"heading", p.heading}});
    return a;
  }
  static void agents_from_json(const nlohmann::json& a, std::array<PointAgent, 10>& team) {
    for (int i = 0; i < 10; ++i) {
      team[i].position = env_detail::vec_from(a.at(i).at("pos"));
      team[i].velocity = env_detail::vec_from(a.at(i).at("vel"));
      team[i].heading = a.at(i).at("heading").get<double>();
    }
  }

  GaitCore core_;
  Ball2D ball_{};
  std::array<PointAgent, 10> ours_{};
  std::array<PointAgent, 10> theirs_{};
  int our_active_ = 0;
  int their_active_ = 0;
  bool approaching_ = true;
  std::int64_t tick_ = 0;
  std::int64_t ll_step_ = 0;
  RadarConfig radar_;
  ScalarRateLimiter targdir_filter_{90.0, 30.0};
  Vec2 u_world_{1.0, 0.0};
  double window_start_dist_ = 0.0;
  std::array<Vec2, 2> ball_body_hist_{};
  std::array<double, 2> ballz_hist_{};
};

// ---------------------------------------------------------------------------
// Configuration for the coupled run: one block per policy level, sharing the
// arena count and the master seed.

struct PushTrainConfig {
  std::uint64_t seed = 0;
  TrainConfig ll;
  TrainConfig hl;

  void validate() const {
    ll.validate();
    hl.validate();
    if (ll.env != "push_ll") throw std::invalid_argument("push config: ll.env must be push_ll");
    if (hl.env != "push_hl") throw std::invalid_argument("push config: hl.env must be push_hl");
    if (ll.environments != hl.environments)
      throw std::invalid_argument("push config: ll and hl must share the arena count");
  }
};

inline PushTrainConfig push_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  detail::reject_unknown_keys(j, {"env", "seed", "ll", "hl"});
  if (detail::require_key(j, "env").get<std::string>() != "push_arena")
    throw std::invalid_argument("push config: env must be push_arena");
  PushTrainConfig c;
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  c.ll = train_config_from_json(detail::require_key(j, "ll"));
  c.hl = train_config_from_json(detail::require_key(j, "hl"));
  c.ll.seed = c.seed;
  c.hl.seed = c.seed;
  c.validate();
  return c;
}

inline nlohmann::json push_config_to_json(const PushTrainConfig& c) {
  return nlohmann::json{{"env", "push_arena"},
                        {"seed", c.seed},
                        {"ll", train_config_to_json(c.ll)},
                        {"hl", train_config_to_json(c.hl)}};
}

// ---------------------------------------------------------------------------
// Lockstep trainer. All arenas advance tick by tick in index order; the
// high level batches are tick-aligned (one sample per arena per period), the
// low level pools whatever embodied steps accrued and updates once the pool
// reaches its configured batch. Everything runs on one thread, so a rerun
// with the same seed reproduces both metric streams bit for bit.

class PushTrainer {
 public:
  explicit PushTrainer(const PushTrainConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int n = cfg_.ll.environments;
    arenas_.resize(n);
    for (int i = 0; i < n; ++i) {
      env_rng_.emplace_back(stream_seed(cfg_.seed, "env", i));
      ll_act_rng_.emplace_back(stream_seed(cfg_.seed, "act", i));
      hl_act_rng_.emplace_back(stream_seed(cfg_.seed, "hlact", i));
    }
    ll_obs_spec_ = arenas_[0].ll_observation_symmetry();
    ll_act_spec_ = PushArena::ll_action_symmetry();
    hl_obs_spec_ = arenas_[0].hl_observation_symmetry();
    hl_act_spec_ = PushArena::hl_action_symmetry();
    for (const auto* sp : {&ll_obs_spec_, &ll_act_spec_, &hl_obs_spec_, &hl_act_spec_})
      if (!validate_spec(*sp).ok())
        throw std::logic_error("PushTrainer: mirror spec failed validation");

    ll_model_ = ActorCritic::make(PushArena::kLlObsSize, PushArena::kLlActSize,
                                  cfg_.ll.nn_policy_arch, cfg_.ll.nn_value_arch);
    Rng ll_init(stream_seed(cfg_.seed, "init", 0));
    init_weights(ll_model_, ll_init);
    hl_model_ = ActorCritic::make(RadarConfig{}.frame_size(), 1, cfg_.hl.nn_policy_arch,
                                  cfg_.hl.nn_value_arch);
    Rng hl_init(stream_seed(cfg_.seed, "hlinit", 0));
    init_weights(hl_model_, hl_init);
    ll_adam_ = AdamState(param_count(ll_model_));
    hl_adam_ = AdamState(param_count(hl_model_));
    ll_shuffle_ = Rng(stream_seed(cfg_.seed, "shuffle", 0));
    hl_shuffle_ = Rng(stream_seed(cfg_.seed, "hlshuffle", 0));

    ll_pending_.resize(n);
    hl_pending_.resize(n);
    hl_open_.resize(n);
    ll_ep_return_.assign(n, 0.0);
    hl_ep_return_.assign(n, 0.0);
    for (int i = 0; i < n; ++i) arenas_[i].reset(env_rng_[i]);
  }

  const PushTrainConfig& config() const { return cfg_; }
  const ActorCritic& ll_model() const { return ll_model_; }
  const ActorCritic& hl_model() const { return hl_model_; }
  std::int64_t ll_env_steps() const { return ll_env_steps_; }
  std::int64_t hl_env_steps() const { return hl_env_steps_; }
  std::int64_t ll_update_index() const { return ll_update_index_; }
  std::int64_t hl_update_index() const { return hl_update_index_; }
  std::int64_t global_tick() const { return global_tick_; }
  const std::vector<MetricsRow>& ll_metrics() const { return ll_metrics_; }
  const std::vector<MetricsRow>& hl_metrics() const { return hl_metrics_; }
  // Mean clipped goal-progress component per high-level update, in update order.
  const std::vector<double>& hl_progress_history() const { return hl_progress_history_; }
  const PushArena& arena(int i) const { return arenas_.at(i); }

  bool finished() const { return ll_env_steps_ >= cfg_.ll.total_time_steps; }

  // Advance every arena one tick, then run whichever updates came due.
  // Returns true if at least one policy updated.
  bool step() {
    const int n = static_cast<int>(arenas_.size());
    for (int a = 0; a < n; ++a) {
      PushArena& ar = arenas_[a];
      if (ar.hl_boundary()) {
        if (hl_open_[a].active) finalize_hl(a, ar.window_score(), false);
        OpenHl o;
        o.active = true;
        o.obs = ar.hl_observation();
        PolicySample s = sample_action(hl_model_.policy, o.obs, hl_act_rng_[a], tape_);
        o.act = s.action;
        o.logprob = s.logprob;
        o.value = forward(hl_model_.value, o.obs, tape_)[0];
        ar.apply_hl(s.action[0]);
        hl_open_[a] = std::move(o);
      }
      PushArena::TickResult r;
      if (ar.ll_active()) {
        Sample smp;
        smp.obs = ar.ll_observation();
        PolicySample s = sample_action(ll_model_.policy, smp.obs, ll_act_rng_[a], tape_);
        smp.value = forward(ll_model_.value, smp.obs, tape_)[0];
        r = ar.tick(s.action);
        smp.act = std::move(s.action);
        smp.logprob = s.logprob;
        smp.reward = r.ll_reward;
        smp.done = r.ll_done ? 1 : 0;
        ll_ep_return_[a] += r.ll_reward;
        if (r.ll_done) {
          ll_completed_.push_back(ll_ep_return_[a]);
          ll_ep_return_[a] = 0.0;
        }
        ll_pending_[a].push_back(std::move(smp));
        ++ll_pool_;
      } else {
        r = ar.tick({});
      }
      if (r.hl_over) {
        if (hl_open_[a].active) finalize_hl(a, ar.window_score(), true);
        hl_completed_.push_back(hl_ep_return_[a]);
        hl_ep_return_[a] = 0.0;
        ar.reset(env_rng_[a]);
      }
    }
    ++global_tick_;

    bool updated = false;
    if (hl_ready()) {
      hl_update();
      updated = true;
    }
    if (ll_pool_ >= cfg_.ll.steps_per_update()) {
      ll_update();
      updated = true;
    }
    return updated;
  }

  void run(const std::function<void(const MetricsRow&, bool)>& on_update = {}) {
    while (!finished()) {
      std::size_t ll_before = ll_metrics_.size();
      std::size_t hl_before = hl_metrics_.size();
      step();
      if (on_update) {
        for (std::size_t i = hl_before; i < hl_metrics_.size(); ++i) on_update(hl_metrics_[i], false);
        for (std::size_t i = ll_before; i < ll_metrics_.size(); ++i) on_update(ll_metrics_[i], true);
      }
    }
  }

  nlohmann::json save_state() const {
    nlohmann::json j;
    j["format"] = 1;
    j["global_tick"] = global_tick_;
    j["ll"] = level_json(ll_model_, ll_adam_, ll_shuffle_, ll_update_index_, ll_env_steps_,
                         ll_mean_return_);
    j["hl"] = level_json(hl_model_, hl_adam_, hl_shuffle_, hl_update_index_, hl_env_steps_,
                         hl_mean_return_);
    j["hl_progress"] = hl_progress_history_;
    j["ll_completed"] = ll_completed_;
    j["hl_completed"] = hl_completed_;
    nlohmann::json as = nlohmann::json::array();
    for (std::size_t i = 0; i < arenas_.size(); ++i) {
      nlohmann::json a;
      a["arena"] = arenas_[i].save_state();
      a["env_rng"] = env_rng_[i].state();
      a["ll_act_rng"] = ll_act_rng_[i].state();
      a["hl_act_rng"] = hl_act_rng_[i].state();
      a["ll_pending"] = samples_json(ll_pending_[i]);
      a["hl_pending"] = samples_json(hl_pending_[i]);
      a["hl_progress_pending"] = hl_progress_pending_.size() > i ? nlohmann::json(hl_progress_pending_[i])
                                                                 : nlohmann::json::array();
      a["hl_open"] = open_json(hl_open_[i]);
      a["ll_ep_return"] = ll_ep_return_[i];
      a["hl_ep_return"] = hl_ep_return_[i];
      as.push_back(std::move(a));
    }
    j["arenas"] = std::move(as);
    j["ll_pool"] = ll_pool_;
    return j;
  }

  void load_state(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", 0) != 1)
      throw std::invalid_argument("PushTrainer::load_state: unrecognized format");
    global_tick_ = j.at("global_tick").get<std::int64_t>();
    level_from_json(j.at("ll"), ll_model_, ll_adam_, ll_shuffle_, ll_update_index_, ll_env_steps_,
                    ll_mean_return_);
    level_from_json(j.at("hl"), hl_model_, hl_adam_, hl_shuffle_, hl_update_index_, hl_env_steps_,
                    hl_mean_return_);
    hl_progress_history_ = j.at("hl_progress").get<std::vector<double>>();
    ll_completed_ = j.at("ll_completed").get<std::vector<double>>();
    hl_completed_ = j.at("hl_completed").get<std::vector<double>>();
    const auto& as = j.at("arenas");
    if (as.size() != arenas_.size())
      throw std::invalid_argument("PushTrainer::load_state: arena count mismatch");
    hl_progress_pending_.assign(arenas_.size(), {});
    for (std::size_t i = 0; i < arenas_.size(); ++i) {
      arenas_[i].load_state(as[i].at("arena"));
      env_rng_[i].set_state(as[i].at("env_rng").get<std::string>());
      ll_act_rng_[i].set_state(as[i].at("ll_act_rng").get<std::string>());
      hl_act_rng_[i].set_state(as[i].at("hl_act_rng").get<std::string>());
      samples_from_json(as[i].at("ll_pending"), ll_pending_[i]);
      samples_from_json(as[i].at("hl_pending"), hl_pending_[i]);
      hl_progress_pending_[i] = as[i].at("hl_progress_pending").get<std::vector<double>>();
      open_from_json(as[i].at("hl_open"), hl_open_[i]);
      ll_ep_return_[i] = as[i].at("ll_ep_return").get<double>();
      hl_ep_return_[i] = as[i].at("hl_ep_return").get<double>();
    }
    ll_pool_ = j.at("ll_pool").get<std::int64_t>();
  }

 private:
  struct Sample {
    std::vector<double> obs;
    std::vector<double> act;
    double logprob = 0.0;
    double value = 0.0;
    double reward = 0.0;
    std::uint8_t done = 0;
  };
  struct OpenHl {
    bool active = false;
    std::vector<double> obs;
    std::vector<double> act;
    double logprob = 0.0;
    double value = 0.0;
  };

  void finalize_hl(int a, PushArena::WindowScore sc, bool done) {
    Sample smp;
    smp.obs = std::move(hl_open_[a].obs);
    smp.act = std::move(hl_open_[a].act);
    smp.logprob = hl_open_[a].logprob;
    smp.value = hl_open_[a].value;
    smp.reward = sc.reward;
    smp.done = done ? 1 : 0;
    hl_open_[a].active = false;
    hl_ep_return_[a] += sc.reward;
    hl_pending_[a].push_back(std::move(smp));
    if (hl_progress_pending_.size() != arenas_.size()) hl_progress_pending_.resize(arenas_.size());
    hl_progress_pending_[a].push_back(sc.progress_term);
  }

  bool hl_ready() const {
    for (const auto& p : hl_pending_)
      if (static_cast<int>(p.size()) < cfg_.hl.batch_steps) return false;
    return true;
  }

  // Assemble a RolloutBatch from per-arena sample runs. `take` caps how many
  // samples each arena contributes (0 means all); consumed samples are erased.
  RolloutBatch drain(std::vector<std::vector<Sample>>& pending, int take, const ActorCritic& model,
                     const TrainConfig& tc, const SymmetrySpec& ospec, const SymmetrySpec& aspec,
                     const std::function<std::vector<double>(int)>& successor_obs) {
    RolloutBatch batch;
    batch.obs_dim = model.policy.obs_dim();
    batch.act_dim = model.policy.action_dim();
    for (std::size_t a = 0; a < pending.size(); ++a) {
      auto& seg = pending[a];
      const int n = take > 0 ? std::min<int>(take, static_cast<int>(seg.size()))
                             : static_cast<int>(seg.size());
      if (n == 0) continue;
      std::vector<double> rewards(n), values(n);
      std::vector<std::uint8_t> dones(n);
      for (int t = 0; t < n; ++t) {
        const Sample& s = seg[t];
        batch.observations.insert(batch.observations.end(), s.obs.begin(), s.obs.end());
        batch.actions.insert(batch.actions.end(), s.act.begin(), s.act.end());
        batch.old_logprobs.push_back(s.logprob);
        rewards[t] = s.reward;
        values[t] = s.value;
        dones[t] = s.done;
      }
      double bootstrap = 0.0;
      if (!dones[n - 1]) {
        std::vector<double> nxt = static_cast<int>(seg.size()) > n
                                      ? seg[n].obs
                                      : successor_obs(static_cast<int>(a));
        bootstrap = forward(model.value, nxt, tape_)[0];
      }
      GaeResult gae = compute_gae(rewards, values, bootstrap, dones, tc.gamma, tc.gae_lambda);
      batch.rewards.insert(batch.rewards.end(), rewards.begin(), rewards.end());
      batch.values.insert(batch.values.end(), values.begin(), values.end());
      batch.dones.insert(batch.dones.end(), dones.begin(), dones.end());
      batch.advantages.insert(batch.advantages.end(), gae.advantages.begin(), gae.advantages.end());
      batch.returns.insert(batch.returns.end(), gae.returns.begin(), gae.returns.end());
      seg.erase(seg.begin(), seg.begin() + n);
    }
    normalize_advantages(batch.advantages);
    batch.mirrored_observations.resize(batch.observations.size());
    batch.mirrored_actions.resize(batch.actions.size());
    for (int i = 0; i < batch.size(); ++i) {
      auto mo = apply_symmetry(ospec, batch.obs_row(i));
      std::copy(mo.begin(), mo.end(),
                batch.mirrored_observations.begin() + static_cast<std::size_t>(i) * batch.obs_dim);
      auto ma = apply_symmetry(aspec, batch.act_row(i));
      std::copy(ma.begin(), ma.end(),
                batch.mirrored_actions.begin() + static_cast<std::size_t>(i) * batch.act_dim);
    }
    return batch;
  }

  void ll_update() {
    RolloutBatch batch =
        drain(ll_pending_, 0, ll_model_, cfg_.ll, ll_obs_spec_, ll_act_spec_, [this](int a) {
          return arenas_[a].ll_observation();
        });
    const double lr = cfg_.ll.lr_at(ll_env_steps_);
    OptimizeStats s = run_optimization(batch, ll_model_, ll_adam_, adam_cfg_, ll_shuffle_,
                                       cfg_.ll.loss_weights(), cfg_.ll.epochs,
                                       cfg_.ll.mini_batch_size, lr);
    ll_env_steps_ += batch.size();
    ll_pool_ = 0;
    ll_update_index_ += 1;
    if (!ll_completed_.empty()) {
      ll_mean_return_ = std::accumulate(ll_completed_.begin(), ll_completed_.end(), 0.0) /
                        static_cast<double>(ll_completed_.size());
      ll_completed_.clear();
    } else {
      ll_mean_return_ = std::accumulate(ll_ep_return_.begin(), ll_ep_return_.end(), 0.0) /
                        static_cast<double>(ll_ep_return_.size());
    }
    ll_metrics_.push_back(make_row(ll_update_index_, ll_env_steps_, ll_mean_return_, s, lr));
  }

  void hl_update() {
    RolloutBatch batch =
        drain(hl_pending_, cfg_.hl.batch_steps, hl_model_, cfg_.hl, hl_obs_spec_, hl_act_spec_,
              [this](int a) {
                return hl_open_[a].active ? hl_open_[a].obs : arenas_[a].hl_observation();
              });
    const double lr = cfg_.hl.lr_at(hl_env_steps_);
    OptimizeStats s = run_optimization(batch, hl_model_, hl_adam_, adam_cfg_, hl_shuffle_,
                                       cfg_.hl.loss_weights(), cfg_.hl.epochs,
                                       cfg_.hl.mini_batch_size, lr);
    hl_env_steps_ += batch.size();
    hl_update_index_ += 1;
    if (!hl_completed_.empty()) {
      hl_mean_return_ = std::accumulate(hl_completed_.begin(), hl_completed_.end(), 0.0) /
                        static_cast<double>(hl_completed_.size());
      hl_completed_.clear();
    } else {
      hl_mean_return_ = std::accumulate(hl_ep_return_.begin(), hl_ep_return_.end(), 0.0) /
                        static_cast<double>(hl_ep_return_.size());
    }
    double prog = 0.0;
    int prog_n = 0;
    for (auto& v : hl_progress_pending_) {
      const int n = std::min<int>(cfg_.hl.batch_steps, static_cast<int>(v.size()));
      for (int t = 0; t < n; ++t) prog += v[t];
      prog_n += n;
      v.erase(v.begin(), v.begin() + n);
    }
    hl_progress_history_.push_back(prog_n > 0 ? prog / prog_n : 0.0);
    hl_metrics_.push_back(make_row(hl_update_index_, hl_env_steps_, hl_mean_return_, s, lr));
  }

  static MetricsRow make_row(std::int64_t idx, std::int64_t steps, double mean_return,
                             const OptimizeStats& s, double lr) {
    MetricsRow row;
    row.update_index = idx;
    row.env_steps = steps;
    row.mean_return = mean_return;
    row.policy_loss = s.policy_term;
    row.value_loss = s.value_loss;
    row.psl_pi = s.psl_pi;
    row.psl_v = s.psl_v;
    row.mean_x_t = s.mean_x;
    row.lr = lr;
    return row;
  }

  static nlohmann::json level_json(const ActorCritic& model, const AdamState& adam,
                                   const Rng& shuffle, std::int64_t update_index,
                                   std::int64_t env_steps, double mean_return) {
    return {{"params", flatten_params(model)}, {"adam_t", adam.t},     {"adam_m", adam.m},
            {"adam_v", adam.v},                {"shuffle_rng", shuffle.state()},
            {"update_index", update_index},    {"env_steps", env_steps},
            {"mean_return", mean_return}};
  }
  static void level_from_json(const nlohmann::json& j, ActorCritic& model, AdamState& adam,
                              Rng& shuffle, std::int64_t& update_index, std::int64_t& env_steps,
                              double& mean_return) {
    auto params = j.at("params").get<std::vector<double>>();
    unflatten_params(model, params);
    adam.t = j.at("adam_t").get<std::int64_t>();
    adam.m = j.at("adam_m").get<std::vector<double>>();
    adam.v = j.at("adam_v").get<std::vector<double>>();
    if (adam.m.size() != param_count(model) || adam.v.size() != param_count(model))
      throw std::invalid_argument("PushTrainer::load_state: optimizer size mismatch");
    shuffle.set_state(j.at("shuffle_rng").get<std::string>());
    update_index = j.at("update_index").get<std::int64_t>();
    env_steps = j.at("env_steps").get<std::int64_t>();
    mean_return = j.at("mean_return").get<double>();
  }

  static nlohmann::json samples_json(const std::vector<Sample>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& s : v)
      a.push_back({{"obs", s.obs},
                   {"act", s.act},
                   {"logprob", s.logprob},
                   {"value", s.value},
                   {"reward", s.reward},
                   {"done", static_cast<int>(s.done)}});
    return a;
  }
  static void samples_from_json(const nlohmann::json& a, std::vector<Sample>& v) {
    v.clear();
    for (const auto& e : a) {
      Sample s;
      s.obs = e.at("obs").get<std::vector<double>>();
      s.act = e.at("act").get<std::vector<double>>();
      s.logprob = e.at("logprob").get<double>();
      s.value = e.at("value").get<double>();
      s.reward = e.at("reward").get<double>();
      s.done = static_cast<std::uint8_t>(e.at("done").get<int>());
      v.push_back(std::move(s));
    }
  }
  static nlohmann::json open_json(const OpenHl& o) {
    return {{"active", o.active}, {"obs", o.obs},     {"act", o.act},
            {"logprob", o.logprob}, {"value", o.value}};
  }
  static void open_from_json(const nlohmann::json& j, OpenHl& o) {
    o.active = j.at("active").get<bool>();
    o.obs = j.at("obs").get<std::vector<double>>();
    o.act = j.at("act").get<std::vector<double>>();
    o.logprob = j.at("logprob").get<double>();
    o.value = j.at("value").get<double>();
  }

  PushTrainConfig cfg_;
  std::vector<PushArena> arenas_;
  std::vector<Rng> env_rng_, ll_act_rng_, hl_act_rng_;
  SymmetrySpec ll_obs_spec_, ll_act_spec_, hl_obs_spec_, hl_act_spec_;
  ActorCritic ll_model_, hl_model_;
  AdamState ll_adam_{0}, hl_adam_{0};
  AdamConfig adam_cfg_;
  Rng ll_shuffle_{0}, hl_shuffle_{0};
  MlpTape tape_;

  std::vector<std::vector<Sample>> ll_pending_, hl_pending_;
  std::vector<std::vector<double>> hl_progress_pending_;
  std::vector<OpenHl> hl_open_;
  std::vector<double> ll_ep_return_, hl_ep_return_;
  std::vector<double> ll_completed_, hl_completed_;
  std::int64_t ll_pool_ = 0;
  std::int64_t global_tick_ = 0;
  std::int64_t ll_update_index_ = 0, hl_update_index_ = 0;
  std::int64_t ll_env_steps_ = 0, hl_env_steps_ = 0;
  double ll_mean_return_ = 0.0, hl_mean_return_ = 0.0;
  std::vector<MetricsRow> ll_metrics_, hl_metrics_;
  std::vector<double> hl_progress_history_;
};

// Deterministic arena playout with mean actions at both levels; used by the
// evaluation command. Returns the summed rewards per level over one arena
// episode (reset to ball-out) and the number of ticks it took.
struct PushEvalResult {
  double hl_return = 0.0;
  double ll_return = 0.0;
  std::int64_t ticks = 0;
  std::int64_t hl_decisions = 0;
};

inline PushEvalResult push_eval_episode(
    PushArena& arena, const ActorCritic& ll_model, const ActorCritic& hl_model, Rng& rng,
    std::int64_t max_ticks = 20000,
    const std::function<void(const PushArena&)>& on_tick = {}) {
  PushEvalResult out;
  MlpTape tape;
  arena.reset(rng);
  bool window_open = false;
  for (std::int64_t t = 0; t < max_ticks; ++t) {
    if (arena.hl_boundary()) {
      if (window_open) out.hl_return += arena.window_score().reward;
      auto obs = arena.hl_observation();
      const auto& mu = forward(hl_model.policy.mean, obs, tape);
      arena.apply_hl(mu[0]);
      window_open = true;
      ++out.hl_decisions;
    }
    PushArena::TickResult r;
    if (arena.ll_active()) {
      auto obs = arena.ll_observation();
      const auto& mu = forward(ll_model.policy.mean, obs, tape);
      r = arena.tick(mu);
      out.ll_return += r.ll_reward;
    } else {
      r = arena.tick({});
    }
    ++out.ticks;
    if (on_tick) on_tick(arena);
    if (r.hl_over) {
      if (window_open) out.hl_return += arena.window_score().reward;
      break;
    }
  }
  return out;
}

}  // namespace symrl
