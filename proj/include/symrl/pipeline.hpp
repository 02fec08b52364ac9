#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <symrl/symmetry.hpp>

namespace symrl {

struct Range {
  double lo = -1.0;
  double hi = 1.0;
};

// y_t = alpha * x_t + (1 - alpha) * y_{t-1}. `memory` holds y_{t-1} and is
// updated in place. Step response from zero after n unit inputs: 1-(1-a)^n.
inline double ema_filter(double& memory, double alpha, double input) {
  if (alpha <= 0.0 || alpha > 1.0) throw std::domain_error("ema_filter: alpha outside (0, 1]");
  memory = alpha * input + (1.0 - alpha) * memory;
  return memory;
}

// Near-target attenuation: below 0.2 m the whole action is scaled by
// |targp|*3.5 + 0.3, reaching exactly 1 at the boundary.
inline double walk_global_scale_factor(std::span<const double> targp) {
  if (targp.size() != 2) throw std::invalid_argument("walk_global_scale: targp must be 2-D");
  double mag = std::hypot(targp[0], targp[1]);
  return mag < 0.2 ? mag * 3.5 + 0.3 : 1.0;
}

// Affine [-1, 1] -> [lo, hi]; inputs outside [-1, 1] extrapolate (no clamp).
inline double map_range(double v, const Range& r) {
  return r.lo + (v + 1.0) * 0.5 * (r.hi - r.lo);
}

// combined = action * lambda_scale + primitive.
inline std::vector<double> add_primitive(std::span<const double> action,
                                         std::span<const double> primitive,
                                         double lambda_scale = 1.0) {
  if (action.size() != primitive.size())
    throw std::invalid_argument("add_primitive: dimension mismatch");
  std::vector<double> out(action.size());
  for (std::size_t i = 0; i < action.size(); ++i)
    out[i] = action[i] * lambda_scale + primitive[i];
  return out;
}

inline void clamp_constraints(std::span<double> pose, std::span<const Range> boxes) {
  if (pose.size() != boxes.size())
    throw std::invalid_argument("clamp_constraints: box count mismatch");
  for (std::size_t i = 0; i < pose.size(); ++i)
    pose[i] = std::clamp(pose[i], boxes[i].lo, boxes[i].hi);
}

struct IkResult {
  double theta1 = 0.0;
  double theta2 = 0.0;
  bool clamped = false;  // target was projected onto the reachable annulus
};

// Planar two-link chain, law of cosines, knee-forward branch (theta2 >= 0).
inline IkResult planar_two_link_ik(double x, double y, double l1, double l2) {
  if (l1 <= 0.0 || l2 <= 0.0) throw std::domain_error("planar_two_link_ik: bad link lengths");
  IkResult res;
  double r = std::hypot(x, y);
  const double rmin = std::abs(l1 - l2), rmax = l1 + l2;
  if (r > rmax || r < rmin) {
    res.clamped = true;
    double target_r = std::clamp(r, rmin, rmax);
    if (r > 0.0) {
      x *= target_r / r;
      y *= target_r / r;
    } else {
      x = target_r;
      y = 0.0;
    }
  }
  double D = (x * x + y * y - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  D = std::clamp(D, -1.0, 1.0);
  res.theta2 = std::atan2(std::sqrt(1.0 - D * D), D);
  res.theta1 = std::atan2(y, x) - std::atan2(l2 * std::sin(res.theta2), l1 + l2 * std::cos(res.theta2));
  return res;
}

inline void fk_two_link(double theta1, double theta2, double l1, double l2, double& x, double& y) {
  x = l1 * std::cos(theta1) + l2 * std::cos(theta1 + theta2);
  y = l1 * std::sin(theta1) + l2 * std::sin(theta1 + theta2);
}

// One-step-delay proportional controller: the plant applies the previous
// command for dt before the new one lands, so the current position is
// predicted as observed + last_command * dt.
inline std::vector<double> proportional_control(std::span<const double> target,
                                                std::span<const double> last_command,
                                                std::span<const double> observed, double gain,
                                                double dt) {
  if (target.size() != observed.size() || target.size() != last_command.size())
    throw std::invalid_argument("proportional_control: dimension mismatch");
  std::vector<double> cmd(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    double predicted = observed[i] + last_command[i] * dt;
    cmd[i] = gain * (target[i] - predicted);
  }
  return cmd;
}

// ---------------------------------------------------------------------------
// Declarative stage chain. Each skill's post-processing is one config; stage
// order comes from the config, not from code.

enum class StageKind {
  kSymmetry,        // conditional reflection of the raw action (sprint relabeling)
  kEma,
  kWalkGlobalScale,
  kAssistedScale,   // multiply by the reversion scale from the inputs
  kMapRange,
  kBias,            // windowed or permanent additive bias
  kAddPrimitive,
  kClamp,
  kTwoLinkIk,       // leading leg pairs (x, z) -> (theta1, theta2), rest passes through
  kControl,
};

struct Stage {
  StageKind kind = StageKind::kEma;
  double alpha = 0.2;              // kEma
  SymmetrySpec spec;               // kSymmetry
  std::vector<Range> ranges;       // kMapRange
  std::vector<double> bias;        // kBias
  double window_s = 0.0;           // kBias: active while elapsed < window (ignored if permanent)
  bool permanent = false;          // kBias
  std::vector<Range> boxes;        // kClamp
  double l1 = 0.25, l2 = 0.25;     // kTwoLinkIk
  double base_x = 0.0, base_z = -0.45;
  int legs = 2;
  double gain = 15.0;              // kControl
  double dt = 0.02;
};

struct PipelineConfig {
  std::vector<Stage> stages;
};

struct PipelineState {
  std::vector<double> ema;
  std::vector<double> last_command;

  nlohmann::json to_json() const {
    return nlohmann::json{{"ema", ema}, {"last_command", last_command}};
  }
  static PipelineState from_json(const nlohmann::json& j) {
    PipelineState s;
    s.ema = j.at("ema").get<std::vector<double>>();
    s.last_command = j.at("last_command").get<std::vector<double>>();
    return s;
  }
};

struct PipelineInputs {
  bool mirrored = false;             // kSymmetry applies only when set
  double lambda_scale = 1.0;         // kAssistedScale
  double elapsed_s = 0.0;            // kBias windows
  std::span<const double> targp;     // kWalkGlobalScale
  std::span<const double> primitive; // kAddPrimitive
  std::span<const double> observed;  // kControl
};

struct PipelineOutput {
  std::vector<double> values;
  bool ik_clamped = false;
};

class PipelineRunner {
 public:
  PipelineRunner() = default;
  explicit PipelineRunner(PipelineConfig cfg) : cfg_(std::move(cfg)) {}

  const PipelineConfig& config() const { return cfg_; }
  PipelineState& state() { return state_; }
  const PipelineState& state() const { return state_; }

  void reset() {
    std::fill(state_.ema.begin(), state_.ema.end(), 0.0);
    std::fill(state_.last_command.begin(), state_.last_command.end(), 0.0);
  }

  PipelineOutput run(std::span<const double> raw, const PipelineInputs& in) {
    PipelineOutput out;
    std::vector<double> v(raw.begin(), raw.end());
    for (const auto& st : cfg_.stages) {
      switch (st.kind) {
        case StageKind::kSymmetry:
          if (in.mirrored) v = apply_symmetry(st.spec, v);
          break;
        case StageKind::kEma: {
          if (state_.ema.size() != v.size()) state_.ema.assign(v.size(), 0.0);
          for (std::size_t i = 0; i < v.size(); ++i) v[i] = ema_filter(state_.ema[i], st.alpha, v[i]);
          break;
        }
        case StageKind::kWalkGlobalScale: {
          double f = walk_global_scale_factor(in.targp);
          for (auto& x : v) x *= f;
          break;
        }
        case StageKind::kAssistedScale:
          for (auto& x : v) x *= in.lambda_scale;
          break;
        case StageKind::kMapRange: {
          if (st.ranges.size() != v.size())
            throw std::invalid_argument("pipeline: map_range channel count mismatch");
          for (std::size_t i = 0; i < v.size(); ++i) v[i] = map_range(v[i], st.ranges[i]);
          break;
        }
        case StageKind::kBias: {
          if (st.bias.size() != v.size())
            throw std::invalid_argument("pipeline: bias channel count mismatch");
          if (st.permanent || in.elapsed_s < st.window_s)
            for (std::size_t i = 0; i < v.size(); ++i) v[i] += st.bias[i];
          break;
        }
        case StageKind::kAddPrimitive:
          v = add_primitive(v, in.primitive, 1.0);
          break;
        case StageKind::kClamp:
          clamp_constraints(v, st.boxes);
          break;
        case StageKind::kTwoLinkIk: {
          std::vector<double> joints;
          joints.reserve(v.size());
          int consumed = 2 * st.legs;
          if (static_cast<int>(v.size()) < consumed)
            throw std::invalid_argument("pipeline: too few channels for IK stage");
          for (int leg = 0; leg < st.legs; ++leg) {
            auto r = planar_two_link_ik(st.base_x + v[2 * leg], st.base_z + v[2 * leg + 1],
                                        st.l1, st.l2);
            out.ik_clamped |= r.clamped;
            joints.push_back(r.theta1);
            joints.push_back(r.theta2);
          }
          joints.insert(joints.end(), v.begin() + consumed, v.end());
          v = std::move(joints);
          break;
        }
        case StageKind::kControl: {
          if (state_.last_command.size() != v.size()) state_.last_command.assign(v.size(), 0.0);
          if (in.observed.size() != v.size())
            throw std::invalid_argument("pipeline: observed joint count mismatch");
          v = proportional_control(v, state_.last_command, in.observed, st.gain, st.dt);
          state_.last_command = v;
          break;
        }
      }
    }
    out.values = std::move(v);
    return out;
  }

 private:
  PipelineConfig cfg_;
  PipelineState state_;
};

// ---------------------------------------------------------------------------
// JSON form of a stage chain.

inline nlohmann::json to_json(const PipelineConfig& cfg) {
  nlohmann::json stages = nlohmann::json::array();
  auto ranges_json = [](const std::vector<Range>& rs) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : rs) a.push_back({r.lo, r.hi});
    return a;
  };
  for (const auto& st : cfg.stages) {
    nlohmann::json j;
    switch (st.kind) {
      case StageKind::kSymmetry:
        j["type"] = "symmetry";
        j["indices"] = st.spec.indices;
        j["multipliers"] = st.spec.multipliers;
        break;
      case StageKind::kEma:
        j["type"] = "ema_filter";
        j["alpha"] = st.alpha;
        break;
      case StageKind::kWalkGlobalScale:
        j["type"] = "walk_global_scale";
        break;
      case StageKind::kAssistedScale:
        j["type"] = "assisted_scale";
        break;
      case StageKind::kMapRange:
        j["type"] = "map_range";
        j["ranges"] = ranges_json(st.ranges);
        break;
      case StageKind::kBias:
        j["type"] = "bias";
        j["values"] = st.bias;
        j["window_s"] = st.window_s;
        j["permanent"] = st.permanent;
        break;
      case StageKind::kAddPrimitive:
        j["type"] = "add_primitive";
        break;
      case StageKind::kClamp:
        j["type"] = "clamp";
        j["boxes"] = ranges_json(st.boxes);
        break;
      case StageKind::kTwoLinkIk:
        j["type"] = "two_link_ik";
        j["l1"] = st.l1;
        j["l2"] = st.l2;
        j["base"] = {st.base_x, st.base_z};
        j["legs"] = st.legs;
        break;
      case StageKind::kControl:
        j["type"] = "proportional_control";
        j["gain"] = st.gain;
        j["dt"] = st.dt;
        break;
    }
    stages.push_back(j);
  }
  return nlohmann::json{{"stages", stages}};
}

inline PipelineConfig pipeline_from_json(const nlohmann::json& j) {
  PipelineConfig cfg;
  auto ranges_from = [](const nlohmann::json& a) {
    std::vector<Range> rs;
    for (const auto& e : a) rs.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
    return rs;
  };
  for (const auto& js : j.at("stages")) {
    Stage st;
    const std::string type = js.at("type").get<std::string>();
    if (type == "symmetry") {
      st.kind = StageKind::kSymmetry;
      st.spec.indices = js.at("indices").get<std::vector<int>>();
      st.spec.multipliers = js.at("multipliers").get<std::vector<double>>();
    } else if (type == "ema_filter") {
      st.kind = StageKind::kEma;
      st.alpha = js.at("alpha").get<double>();
    } else if (type == "walk_global_scale") {
      st.kind = StageKind::kWalkGlobalScale;
    } else if (type == "assisted_scale") {
      st.kind = StageKind::kAssistedScale;
    } else if (type == "map_range") {
      st.kind = StageKind::kMapRange;
      st.ranges = ranges_from(js.at("ranges"));
    } else if (type == "bias") {
      st.kind = StageKind::kBias;
      st.bias = js.at("values").get<std::vector<double>>();
      st.window_s = js.at("window_s").get<double>();
      st.permanent = js.at("permanent").get<bool>();
    } else if (type == "add_primitive") {
      st.kind = StageKind::kAddPrimitive;
    } else if (type == "clamp") {
      st.kind = StageKind::kClamp;
      st.boxes = ranges_from(js.at("boxes"));
    } else if (type == "two_link_ik") {
      st.kind = StageKind::kTwoLinkIk;
      st.l1 = js.at("l1").get<double>();
      st.l2 = js.at("l2").get<double>();
      st.base_x = js.at("base").at(0).get<double>();
      st.base_z = js.at("base").at(1).get<double>();
      st.legs = js.at("legs").get<int>();
    } else if (type == "proportional_control") {
      st.kind = StageKind::kControl;
      st.gain = js.at("gain").get<double>();
      st.dt = js.at("dt").get<double>();
    } else {
      throw std::invalid_argument("pipeline_from_json: unknown stage type '" + type + "'");
    }
    cfg.stages.push_back(std::move(st));
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Shipped presets. Walk-family actions are [ankleL_x, ankleL_z, ankleR_x,
// ankleR_z, shoulderL, shoulderR]; kicks act in joint-speed space; the sprint
// family acts on raw joint position targets.

namespace preset_detail {

inline std::vector<Range> walk_action_ranges() {
  const double sh = 0.5235987755982988;  // 30 degrees
  return {{-0.08, 0.08}, {-0.08, 0.08}, {-0.08, 0.08}, {-0.08, 0.08}, {-sh, sh}, {-sh, sh}};
}

inline std::vector<Range> walk_pose_boxes() {
  return {{-0.12, 0.12}, {-0.04, 0.10}, {-0.12, 0.12}, {-0.04, 0.10}, {-0.6, 0.6}, {-0.6, 0.6}};
}

inline Stage ik_stage() {
  Stage st;
  st.kind = StageKind::kTwoLinkIk;
  return st;
}

inline Stage control_stage() {
  Stage st;
  st.kind = StageKind::kControl;
  return st;
}

inline SymmetrySpec leg_swap_spec() {
  return {{2, 3, 0, 1, 5, 4}, {1, 1, 1, 1, 1, 1}};
}

}  // namespace preset_detail

inline PipelineConfig make_pipeline(const std::string& name) {
  using namespace preset_detail;
  PipelineConfig cfg;
  auto ema = [](double a) {
    Stage st;
    st.kind = StageKind::kEma;
    st.alpha = a;
    return st;
  };
  auto map_stage = [](std::vector<Range> rs) {
    Stage st;
    st.kind = StageKind::kMapRange;
    st.ranges = std::move(rs);
    return st;
  };
  auto clamp_stage = [](std::vector<Range> bs) {
    Stage st;
    st.kind = StageKind::kClamp;
    st.boxes = std::move(bs);
    return st;
  };
  if (name == "walk") {
    cfg.stages.push_back(ema(0.2));
    cfg.stages.push_back({StageKind::kWalkGlobalScale});
    cfg.stages.push_back(map_stage(walk_action_ranges()));
    cfg.stages.push_back({StageKind::kAddPrimitive});
    cfg.stages.push_back(clamp_stage(walk_pose_boxes()));
    cfg.stages.push_back(ik_stage());
    cfg.stages.push_back(control_stage());
  } else if (name == "dribble") {
    cfg.stages.push_back(ema(0.15));
    cfg.stages.push_back({StageKind::kAssistedScale});
    cfg.stages.push_back(map_stage(walk_action_ranges()));
    cfg.stages.push_back({StageKind::kAddPrimitive});
    cfg.stages.push_back(clamp_stage(walk_pose_boxes()));
    cfg.stages.push_back(ik_stage());
    cfg.stages.push_back(control_stage());
  } else if (name == "push_ll") {
    cfg.stages.push_back(ema(0.2));
    cfg.stages.push_back(map_stage(walk_action_ranges()));
    cfg.stages.push_back({StageKind::kAddPrimitive});
    cfg.stages.push_back(clamp_stage(walk_pose_boxes()));
    cfg.stages.push_back(ik_stage());
    cfg.stages.push_back(control_stage());
  } else if (name == "kick_short" || name == "kick_long") {
    std::vector<Range> speed = {{-4.0, 4.0}, {-4.0, 4.0}, {-4.0, 4.0},
                                {-4.0, 4.0}, {-2.0, 2.0}, {-2.0, 2.0}};
    cfg.stages.push_back(map_stage(speed));
    Stage bias;
    bias.kind = StageKind::kBias;
    bias.bias = {0.0, 0.0, -3.0, 1.5, 0.0, 0.0};  // pull the kicking leg back
    bias.window_s = name == "kick_short" ? 0.04 : 0.12;
    cfg.stages.push_back(bias);
  } else if (name == "srk") {
    Stage sym;
    sym.kind = StageKind::kSymmetry;
    sym.spec = leg_swap_spec();
    cfg.stages.push_back(sym);
    cfg.stages.push_back(ema(0.5));
    std::vector<Range> pos = {{-1.2, 1.2}, {-1.2, 1.2}, {-1.2, 1.2},
                              {-1.2, 1.2}, {-0.8, 0.8}, {-0.8, 0.8}};
    cfg.stages.push_back(map_stage(pos));
    cfg.stages.push_back({StageKind::kAddPrimitive});
    cfg.stages.push_back(control_stage());
  } else {
    throw std::invalid_argument("make_pipeline: unknown preset '" + name + "'");
  }
  return cfg;
}

}  // namespace symrl
