#include <catch2/catch_amalgamated.hpp>

#include <symrl/common.hpp>
#include <symrl/primitives.hpp>

using namespace symrl;

TEST_CASE("lateral COM profile matches high-precision evaluation") {
  // Frozen from a 40-digit evaluation of the closed form.
  auto walk = StepBaselineParams::walk();
  REQUIRE(com_lateral(walk, 0.02) == Catch::Approx(0.002061460431846268078).margin(1e-15));
  REQUIRE(com_lateral(walk, 0.04) == Catch::Approx(0.003517627580080790890).margin(1e-15));
  REQUIRE(com_lateral(walk, 0.08) == Catch::Approx(0.004672836747768467033).margin(1e-15));
  REQUIRE(com_lateral(walk, 0.12) == Catch::Approx(0.003517627580080790890).margin(1e-15));
  REQUIRE(com_lateral(walk, 0.14) == Catch::Approx(0.002061460431846268078).margin(1e-15));

  auto drib = StepBaselineParams::dribble_v1();
  REQUIRE(com_lateral(drib, 0.02) == Catch::Approx(0.002208707605549572941).margin(1e-15));
  REQUIRE(com_lateral(drib, 0.04) == Catch::Approx(0.003768886692943704525).margin(1e-15));
  REQUIRE(com_lateral(drib, 0.08) == Catch::Approx(0.005006610801180500392).margin(1e-15));
  REQUIRE(com_lateral(drib, 0.12) == Catch::Approx(0.003768886692943704525).margin(1e-15));
  REQUIRE(StepBaselineParams::push().p_y == 0.060);
  REQUIRE(StepBaselineParams::dribble_v2().p_y == 0.056);
}

TEST_CASE("COM profile endpoints are exactly zero") {
  auto p = StepBaselineParams::walk();
  REQUIRE(com_lateral(p, 0.0) == 0.0);
  REQUIRE(com_lateral(p, p.period) == 0.0);
}

TEST_CASE("COM profile is symmetric about mid-phase") {
  auto p = StepBaselineParams::walk();
  const int n = 1000;
  for (int i = 0; i <= n; ++i) {
    double t = p.period * i / n;
    REQUIRE(com_lateral(p, t) == Catch::Approx(com_lateral(p, p.period - t)).margin(1e-14));
  }
}

TEST_CASE("COM peak stays below the ZMP amplitude") {
  auto p = StepBaselineParams::walk();
  double peak = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    double c = com_lateral(p, p.period * i / 1000.0);
    REQUIRE(c >= 0.0);
    REQUIRE(c <= p.p_y);
    peak = std::max(peak, c);
  }
  // peak = p_y * (1 - 1/cosh(T/(2w))), frozen from the 40-digit evaluation
  REQUIRE(peak == Catch::Approx(0.056 * 0.08344351335300833987).margin(1e-15));
}

TEST_CASE("swing height endpoints exact, midpoint exactly H") {
  auto p = StepBaselineParams::walk();
  REQUIRE(swing_height(p, 0.0) == 0.0);
  REQUIRE(swing_height(p, p.period) == 0.0);
  REQUIRE(swing_height(p, p.period / 2) == 0.02);
  REQUIRE(swing_height(p, 0.02) == Catch::Approx(0.007653668647301795435).margin(1e-16));
  REQUIRE(swing_height(p, 0.04) == Catch::Approx(0.014142135623730950488).margin(1e-16));
}

TEST_CASE("profiles reject times outside the phase") {
  auto p = StepBaselineParams::walk();
  REQUIRE_THROWS_AS(com_lateral(p, -0.01), std::domain_error);
  REQUIRE_THROWS_AS(com_lateral(p, p.period + 1e-9), std::domain_error);
  REQUIRE_THROWS_AS(swing_height(p, -1e-12), std::domain_error);
}

TEST_CASE("phase advances in exact sub-steps at the native tick") {
  PhaseState ps;
  REQUIRE(ps.sbprog() == 0.0);
  REQUIRE(ps.swing == Leg::kLeft);
  for (int i = 1; i <= 7; ++i) {
    ps = advance_phase(ps, 0.02, 0.16);
    REQUIRE(ps.sbprog() == i / 8.0);
    REQUIRE(ps.swing == Leg::kLeft);
  }
  ps = advance_phase(ps, 0.02, 0.16);
  REQUIRE(ps.sbprog() == 0.0);
  REQUIRE(ps.swing == Leg::kRight);
}

TEST_CASE("phase returns to start after whole phases with the leg toggled") {
  for (int k = 1; k <= 5; ++k) {
    PhaseState ps;
    for (int i = 0; i < 8 * k; ++i) ps = advance_phase(ps, 0.02, 0.16);
    REQUIRE(ps.substep == 0);
    REQUIRE(ps.swing == ((k % 2 == 0) ? Leg::kLeft : Leg::kRight));
  }
  PhaseState ps;
  ps = advance_phase(ps, 3 * 0.16, 0.16);  // three full phases in one call
  REQUIRE(ps.sbprog() == 0.0);
  REQUIRE(ps.swing == Leg::kRight);
}

TEST_CASE("phase wrap resolves fractional resolutions exactly") {
  auto ps = PhaseState::from_progress(0.9, Leg::kLeft);
  REQUIRE(ps.sbprog() == 0.9);
  ps = advance_phase(ps, 0.2, 1.0);  // dt/T = 0.2
  REQUIRE(ps.sbprog() == Catch::Approx(0.1).margin(1e-15));
  REQUIRE(ps.swing == Leg::kRight);
}

TEST_CASE("phase rejects non-positive period and negative dt") {
  PhaseState ps;
  REQUIRE_THROWS_AS(advance_phase(ps, 0.02, 0.0), std::domain_error);
  REQUIRE_THROWS_AS(advance_phase(ps, -0.02, 0.16), std::domain_error);
}

TEST_CASE("phase features expose progress, its half-sine, and the leg one-hot") {
  auto f0 = phase_features(PhaseState{});
  REQUIRE(f0.sbprog == 0.0);
  REQUIRE(f0.sbsin == 0.0);
  REQUIRE(f0.leg_left == 1.0);
  REQUIRE(f0.leg_right == 0.0);

  auto ps = PhaseState::from_progress(0.5, Leg::kRight);
  auto f = phase_features(ps);
  REQUIRE(f.sbprog == 0.5);
  REQUIRE(f.sbsin == 1.0);
  REQUIRE(f.leg_left == 0.0);
  REQUIRE(f.leg_right == 1.0);
}

TEST_CASE("baseline pose is continuous across the leg switch") {
  auto p = StepBaselineParams::walk();
  auto near_end = PhaseState::from_progress(0.999999, Leg::kLeft);
  auto before = baseline_pose(near_end, p);
  PhaseState start;
  start.swing = Leg::kRight;
  auto after = baseline_pose(start, p);
  REQUIRE(before.swing_z == Catch::Approx(0.0).margin(1e-6));
  REQUIRE(after.swing_z == 0.0);
  REQUIRE(before.com_y == Catch::Approx(0.0).margin(1e-6));
  REQUIRE(after.com_y == 0.0);
  // lateral support target flips sign across the switch
  REQUIRE(before.support_y == -p.foot_y);
  REQUIRE(after.support_y == p.foot_y);
}

TEST_CASE("baseline pose mirrors between half-cycles") {
  auto p = StepBaselineParams::walk();
  auto a = baseline_pose(PhaseState::from_progress(0.25, Leg::kLeft), p);
  auto b = baseline_pose(PhaseState::from_progress(0.25, Leg::kRight), p);
  REQUIRE(a.swing_z == b.swing_z);
  REQUIRE(a.com_y == -b.com_y);
  REQUIRE(a.support_y == -b.support_y);
  REQUIRE(a.support == Leg::kRight);
  REQUIRE(b.support == Leg::kLeft);
}

TEST_CASE("reversion scale fades linearly to zero over 0.4 s") {
  REQUIRE(reversion_scale(0.0) == 1.0);
  REQUIRE(reversion_scale(0.1) == Catch::Approx(0.75).margin(1e-15));
  REQUIRE(reversion_scale(0.2) == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(reversion_scale(0.4) == 0.0);
  REQUIRE(reversion_scale(1.0) == 0.0);
  REQUIRE_THROWS_AS(reversion_scale(0.1, 0.0), std::domain_error);
}

TEST_CASE("cycle capture averages aligned slots exactly") {
  std::vector<std::vector<double>> traj;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 4; ++i)
      traj.push_back({static_cast<double>(i) + 2.0 * c, -1.0 * i + 2.0 * c});
  auto table = cycle_capture(traj, 4);
  REQUIRE(table.period() == 4);
  REQUIRE(table.dims() == 2);
  for (int i = 0; i < 4; ++i) {
    REQUIRE(table.row(i)[0] == static_cast<double>(i) + 1.0);
    REQUIRE(table.row(i)[1] == -1.0 * i + 1.0);
  }
}

TEST_CASE("cycle capture requires two full cycles") {
  std::vector<std::vector<double>> traj(7, std::vector<double>{0.0});
  REQUIRE_THROWS_AS(cycle_capture(traj, 4), std::invalid_argument);
  REQUIRE_THROWS_AS(cycle_capture(traj, 0), std::invalid_argument);
}

TEST_CASE("primitive lookup wraps modulo the period in both directions") {
  std::vector<std::vector<double>> traj;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 5; ++i) traj.push_back({10.0 * i});
  auto t = cycle_capture(traj, 5);
  REQUIRE(t.row(0)[0] == 0.0);
  REQUIRE(t.row(5)[0] == 0.0);
  REQUIRE(t.row(7)[0] == 20.0);
  REQUIRE(t.row(-1)[0] == 40.0);
  REQUIRE(query_primitive(t, 12)[0] == 20.0);
}

TEST_CASE("cycle capture recovers a noisy cycle to within the averaging bound") {
  Rng rng(2024);
  const int period = 14, cycles = 20, dims = 3;
  std::vector<std::vector<double>> clean(period, std::vector<double>(dims));
  for (int i = 0; i < period; ++i)
    for (int d = 0; d < dims; ++d)
      clean[i][d] = std::sin(2 * kPi * i / period + d) + 0.1 * d;
  const double amp = 0.05;  // uniform noise in [-amp, amp]
  const double sigma = amp / std::sqrt(3.0);
  std::vector<std::vector<double>> traj;
  for (int c = 0; c < cycles; ++c)
    for (int i = 0; i < period; ++i) {
      auto row = clean[i];
      for (auto& v : row) v += rng.uniform(-amp, amp);
      traj.push_back(row);
    }
  auto table = cycle_capture(traj, period);
  double max_err = 0.0;
  for (int i = 0; i < period; ++i)
    for (int d = 0; d < dims; ++d)
      max_err = std::max(max_err, std::abs(table.row(i)[d] - clean[i][d]));
  REQUIRE(max_err < 3.0 * sigma / std::sqrt(static_cast<double>(cycles)));
}

TEST_CASE("primitive table serialization round trips") {
  std::vector<std::vector<double>> rows = {{1.0, 2.0}, {3.0, 4.0}};
  auto t = PrimitiveTable::from_rows(rows);
  auto j = t.to_json();
  auto back = PrimitiveTable::from_json(j);
  REQUIRE(back.period() == 2);
  REQUIRE(back.dims() == 2);
  REQUIRE(back.row(1)[1] == 4.0);
  j["values"] = std::vector<double>{1.0};
  REQUIRE_THROWS_AS(PrimitiveTable::from_json(j), std::invalid_argument);
}

TEST_CASE("skill transition table") {
  using S = Skill;
  using K = TransitionKind;
  // self transitions on the diagonal
  for (auto s : {S::kGetUp, S::kWalk, S::kKick, S::kDribble, S::kPush})
    REQUIRE(allowed_transition(s, s) == K::kSelf);
  // trained transitions
  REQUIRE(allowed_transition(S::kGetUp, S::kWalk) == K::kTrained);
  REQUIRE(allowed_transition(S::kWalk, S::kKick) == K::kTrained);
  REQUIRE(allowed_transition(S::kWalk, S::kDribble) == K::kTrained);
  REQUIRE(allowed_transition(S::kWalk, S::kPush) == K::kTrained);
  // innate transitions
  REQUIRE(allowed_transition(S::kKick, S::kWalk) == K::kInnate);
  REQUIRE(allowed_transition(S::kPush, S::kDribble) == K::kInnate);
  // assisted transitions
  REQUIRE(allowed_transition(S::kDribble, S::kWalk) == K::kAssisted);
  REQUIRE(allowed_transition(S::kPush, S::kWalk) == K::kAssisted);
  // everything else is disallowed
  REQUIRE(allowed_transition(S::kGetUp, S::kKick) == K::kNone);
  REQUIRE(allowed_transition(S::kGetUp, S::kDribble) == K::kNone);
  REQUIRE(allowed_transition(S::kGetUp, S::kPush) == K::kNone);
  REQUIRE(allowed_transition(S::kWalk, S::kGetUp) == K::kNone);
  REQUIRE(allowed_transition(S::kKick, S::kGetUp) == K::kNone);
  REQUIRE(allowed_transition(S::kKick, S::kDribble) == K::kNone);
  REQUIRE(allowed_transition(S::kKick, S::kPush) == K::kNone);
  REQUIRE(allowed_transition(S::kDribble, S::kGetUp) == K::kNone);
  REQUIRE(allowed_transition(S::kDribble, S::kKick) == K::kNone);
  REQUIRE(allowed_transition(S::kDribble, S::kPush) == K::kNone);
  REQUIRE(allowed_transition(S::kPush, S::kGetUp) == K::kNone);
  REQUIRE(allowed_transition(S::kPush, S::kKick) == K::kNone);
}

TEST_CASE("skill parsing") {
  REQUIRE(skill_from_string("walk") == Skill::kWalk);
  REQUIRE(skill_from_string("push") == Skill::kPush);
  REQUIRE_THROWS_AS(skill_from_string("fly"), std::invalid_argument);
  REQUIRE(std::string(to_string(TransitionKind::kAssisted)) == "assisted");
}
