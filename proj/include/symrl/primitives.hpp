#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <symrl/common.hpp>

namespace symrl {

// ---------------------------------------------------------------------------
// Step profile: lateral COM reference and swing foot height over one support
// phase of length T. w is the LIPM time constant sqrt(c_z / g).

struct StepBaselineParams {
  double p_y = 0.056;      // lateral ZMP amplitude (m)
  double step_height = 0.02;  // H (m)
  double period = 0.16;    // T, one support phase (s)
  double com_height = 0.35;   // c_z (m)
  double gravity = 9.81;
  double foot_y = 0.05;    // lateral foot offset F_y (m)

  double w() const { return std::sqrt(com_height / gravity); }

  static StepBaselineParams walk() { return {}; }
  static StepBaselineParams dribble_v1() {
    StepBaselineParams p;
    p.p_y = 0.060;
    return p;
  }
  static StepBaselineParams dribble_v2() { return {}; }
  static StepBaselineParams push() { return dribble_v1(); }
};

// c_y(t) = p_y * (1 - csch(T/w) * (sinh((T-t)/w) + sinh(t/w))).
// Written as a single quotient so both endpoints evaluate to exactly zero
// (x/x == 1 in IEEE arithmetic).
inline double com_lateral(const StepBaselineParams& p, double t) {
  if (t < 0.0 || t > p.period) throw std::domain_error("com_lateral: t outside [0, T]");
  const double w = p.w();
  const double bracket = (std::sinh((p.period - t) / w) + std::sinh(t / w)) / std::sinh(p.period / w);
  return p.p_y * (1.0 - bracket);
}

// h(t) = H * sin(pi * t / T), exactly zero at both ends.
inline double swing_height(const StepBaselineParams& p, double t) {
  if (t < 0.0 || t > p.period) throw std::domain_error("swing_height: t outside [0, T]");
  return p.step_height * sinpi(t / p.period);
}

// ---------------------------------------------------------------------------
// Phase. Progress through the support phase is held as an integer sub-step
// count so repeated control ticks never accumulate drift; dt/T ratios that
// are not representable at the current resolution rescale it on the fly.

enum class Leg { kLeft = 0, kRight = 1 };

inline Leg other(Leg l) { return l == Leg::kLeft ? Leg::kRight : Leg::kLeft; }

namespace detail {

// Best rational num/den ~= x with den <= max_den, via continued fractions.
inline bool rational_fit(double x, std::int64_t max_den, std::int64_t& num, std::int64_t& den) {
  if (x < 0.0) return false;
  std::int64_t p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  double r = x;
  for (int iter = 0; iter < 64; ++iter) {
    double af = std::floor(r);
    if (af > 9e18) return false;
    std::int64_t a = static_cast<std::int64_t>(af);
    std::int64_t p2 = a * p1 + p0;
    std::int64_t q2 = a * q1 + q0;
    if (q2 > max_den || q2 <= 0) return false;
    p0 = p1, q0 = q1, p1 = p2, q1 = q2;
    if (std::abs(x - static_cast<double>(p1) / q1) < 1e-12) {
      num = p1;
      den = q1;
      return true;
    }
    double frac = r - af;
    if (frac < 1e-15) return false;
    r = 1.0 / frac;
  }
  return false;
}

}  // namespace detail

struct PhaseState {
  std::int64_t substep = 0;
  std::int64_t resolution = 8;  // sub-steps per support phase
  Leg swing = Leg::kLeft;

  double sbprog() const { return static_cast<double>(substep) / static_cast<double>(resolution); }

  static PhaseState from_progress(double sbprog, Leg swing = Leg::kLeft) {
    if (sbprog < 0.0 || sbprog >= 1.0)
      throw std::domain_error("PhaseState::from_progress: sbprog outside [0, 1)");
    PhaseState ps;
    ps.swing = swing;
    std::int64_t num = 0, den = 1;
    if (sbprog > 0.0 && detail::rational_fit(sbprog, 1000000, num, den)) {
      ps.resolution = std::lcm<std::int64_t>(8, den);
      ps.substep = num * (ps.resolution / den);
    } else {
      ps.resolution = 1 << 20;
      ps.substep = std::llround(sbprog * ps.resolution);
    }
    return ps;
  }
};

inline PhaseState advance_phase(PhaseState ps, double dt, double T) {
  if (T <= 0.0) throw std::domain_error("advance_phase: T must be positive");
  if (dt < 0.0) throw std::domain_error("advance_phase: dt must be non-negative");
  const double frac = dt / T;
  double steps = frac * static_cast<double>(ps.resolution);
  std::int64_t k = std::llround(steps);
  if (std::abs(steps - static_cast<double>(k)) > 1e-9) {
    std::int64_t num = 0, den = 1;
    if (detail::rational_fit(frac, 1000000, num, den)) {
      std::int64_t res = std::lcm(ps.resolution, den);
      if (res <= (std::int64_t{1} << 40)) {
        ps.substep *= res / ps.resolution;
        k = num * (res / den);
        ps.resolution = res;
      } else {
        k = std::llround(frac * static_cast<double>(ps.resolution));
      }
    } else {
      k = std::llround(steps);
    }
  }
  ps.substep += k;
  while (ps.substep >= ps.resolution) {
    ps.substep -= ps.resolution;
    ps.swing = other(ps.swing);
  }
  return ps;
}

struct PhaseFeatures {
  double sbprog = 0.0;
  double sbsin = 0.0;
  double leg_left = 0.0;   // 1 when the left leg is the swing leg
  double leg_right = 0.0;
};

inline PhaseFeatures phase_features(const PhaseState& ps) {
  PhaseFeatures f;
  f.sbprog = ps.sbprog();
  f.sbsin = sinpi(f.sbprog);
  f.leg_left = ps.swing == Leg::kLeft ? 1.0 : 0.0;
  f.leg_right = 1.0 - f.leg_left;
  return f;
}

// Foot-target pair for the current phase. com_y is signed: positive toward
// the left (+y), i.e. toward the support foot when the left leg supports.
struct BaselinePose {
  Leg swing = Leg::kLeft;
  Leg support = Leg::kRight;
  double swing_z = 0.0;
  double com_y = 0.0;
  double support_y = 0.0;  // lateral position of the support foot
};

inline BaselinePose baseline_pose(const PhaseState& ps, const StepBaselineParams& p) {
  BaselinePose pose;
  pose.swing = ps.swing;
  pose.support = other(ps.swing);
  const double t = ps.sbprog() * p.period;
  pose.swing_z = swing_height(p, t);
  const double side = pose.support == Leg::kLeft ? 1.0 : -1.0;
  pose.com_y = side * com_lateral(p, t);
  pose.support_y = side * p.foot_y;
  return pose;
}

// Linear fade used when an assisted skill hands control back to its primitive.
inline double reversion_scale(double elapsed_s, double duration_s = 0.4) {
  if (duration_s <= 0.0) throw std::domain_error("reversion_scale: duration must be positive");
  return std::max(0.0, 1.0 - elapsed_s / duration_s);
}

// ---------------------------------------------------------------------------
// Captured joint cycles. Frozen after construction; lookups are modular.

class PrimitiveTable {
 public:
  PrimitiveTable() = default;

  static PrimitiveTable from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("PrimitiveTable: no rows");
    PrimitiveTable t;
    t.period_ = static_cast<int>(rows.size());
    t.dims_ = static_cast<int>(rows[0].size());
    if (t.dims_ == 0) throw std::invalid_argument("PrimitiveTable: zero-width rows");
    t.values_.reserve(static_cast<std::size_t>(t.period_) * t.dims_);
    for (const auto& r : rows) {
      if (static_cast<int>(r.size()) != t.dims_)
        throw std::invalid_argument("PrimitiveTable: ragged rows");
      t.values_.insert(t.values_.end(), r.begin(), r.end());
    }
    return t;
  }

  int period() const { return period_; }
  int dims() const { return dims_; }
  bool empty() const { return period_ == 0; }

  std::span<const double> row(std::int64_t step) const {
    if (period_ == 0) throw std::logic_error("PrimitiveTable: empty table");
    std::int64_t i = step % period_;
    if (i < 0) i += period_;
    return {values_.data() + static_cast<std::size_t>(i) * dims_, static_cast<std::size_t>(dims_)};
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"period", period_}, {"dims", dims_}, {"values", values_}};
  }

  static PrimitiveTable from_json(const nlohmann::json& j) {
    PrimitiveTable t;
    t.period_ = j.at("period").get<int>();
    t.dims_ = j.at("dims").get<int>();
    t.values_ = j.at("values").get<std::vector<double>>();
    if (t.period_ <= 0 || t.dims_ <= 0 ||
        t.values_.size() != static_cast<std::size_t>(t.period_) * t.dims_)
      throw std::invalid_argument("PrimitiveTable: malformed serialized table");
    return t;
  }

 private:
  int period_ = 0;
  int dims_ = 0;
  std::vector<double> values_;
};

inline std::span<const double> query_primitive(const PrimitiveTable& t, std::int64_t step) {
  return t.row(step);
}

// Per-slot mean over all complete and partial repetitions of the cycle:
// primitive[i] = mean_k trajectory[i + k*period]. Needs at least two cycles.
inline PrimitiveTable cycle_capture(const std::vector<std::vector<double>>& trajectory,
                                    int period) {
  if (period <= 0) throw std::invalid_argument("cycle_capture: period must be positive");
  if (static_cast<int>(trajectory.size()) < 2 * period)
    throw std::invalid_argument("cycle_capture: need at least two full cycles, got " +
                                std::to_string(trajectory.size()) + " rows for period " +
                                std::to_string(period));
  const int dims = static_cast<int>(trajectory[0].size());
  std::vector<std::vector<double>> rows(period, std::vector<double>(dims, 0.0));
  for (int i = 0; i < period; ++i) {
    int count = 0;
    for (std::size_t t = i; t < trajectory.size(); t += period) {
      if (static_cast<int>(trajectory[t].size()) != dims)
        throw std::invalid_argument("cycle_capture: ragged trajectory");
      for (int d = 0; d < dims; ++d) rows[i][d] += trajectory[t][d];
      ++count;
    }
    for (int d = 0; d < dims; ++d) rows[i][d] /= count;
  }
  return PrimitiveTable::from_rows(rows);
}

// ---------------------------------------------------------------------------
// Which skill may follow which, and how the handover happens.

enum class Skill { kGetUp = 0, kWalk, kKick, kDribble, kPush };
enum class TransitionKind { kSelf, kTrained, kInnate, kAssisted, kNone };

inline TransitionKind allowed_transition(Skill from, Skill to) {
  using K = TransitionKind;
  static constexpr K table[5][5] = {
      // to:      GetUp     Walk        Kick        Dribble     Push
      /*GetUp*/ {K::kSelf, K::kTrained, K::kNone, K::kNone, K::kNone},
      /*Walk*/ {K::kNone, K::kSelf, K::kTrained, K::kTrained, K::kTrained},
      /*Kick*/ {K::kNone, K::kInnate, K::kSelf, K::kNone, K::kNone},
      /*Dribble*/ {K::kNone, K::kAssisted, K::kNone, K::kSelf, K::kNone},
      /*Push*/ {K::kNone, K::kAssisted, K::kNone, K::kInnate, K::kSelf},
  };
  int f = static_cast<int>(from), t = static_cast<int>(to);
  if (f < 0 || f > 4 || t < 0 || t > 4)
    throw std::invalid_argument("allowed_transition: unknown skill");
  return table[f][t];
}

inline Skill skill_from_string(const std::string& s) {
  if (s == "getup") return Skill::kGetUp;
  if (s == "walk") return Skill::kWalk;
  if (s == "kick") return Skill::kKick;
  if (s == "dribble") return Skill::kDribble;
  if (s == "push") return Skill::kPush;
  throw std::invalid_argument("skill_from_string: unknown skill '" + s + "'");
}

inline const char* to_string(TransitionKind k) {
  switch (k) {
    case TransitionKind::kSelf: return "self";
    case TransitionKind::kTrained: return "trained";
    case TransitionKind::kInnate: return "innate";
    case TransitionKind::kAssisted: return "assisted";
    case TransitionKind::kNone: return "none";
  }
  return "?";
}

}  // namespace symrl
