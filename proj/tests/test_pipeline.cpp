#include <catch2/catch_amalgamated.hpp>

#include <symrl/common.hpp>
#include <symrl/pipeline.hpp>

using namespace symrl;

TEST_CASE("ema step response follows the closed form") {
  for (double alpha : {0.15, 0.2, 0.5}) {
    double mem = 0.0;
    for (int n = 1; n <= 40; ++n) {
      double y = ema_filter(mem, alpha, 1.0);
      REQUIRE(y == Catch::Approx(1.0 - std::pow(1.0 - alpha, n)).margin(1e-12));
    }
  }
}

TEST_CASE("ema of a constant settles at the constant") {
  double mem = 0.7;
  for (int i = 0; i < 200; ++i) ema_filter(mem, 0.2, 0.7);
  REQUIRE(mem == Catch::Approx(0.7).margin(1e-15));
}

TEST_CASE("ema rejects alpha outside (0, 1]") {
  double mem = 0.0;
  REQUIRE_THROWS_AS(ema_filter(mem, 0.0, 1.0), std::domain_error);
  REQUIRE_THROWS_AS(ema_filter(mem, 1.5, 1.0), std::domain_error);
}

TEST_CASE("walk global scale kicks in below 0.2 m") {
  REQUIRE(walk_global_scale_factor(std::vector<double>{0.2, 0.0}) == 1.0);
  REQUIRE(walk_global_scale_factor(std::vector<double>{0.5, 0.5}) == 1.0);
  REQUIRE(walk_global_scale_factor(std::vector<double>{0.1, 0.0}) ==
          Catch::Approx(0.65).margin(1e-15));
  REQUIRE(walk_global_scale_factor(std::vector<double>{0.0, 0.0}) ==
          Catch::Approx(0.3).margin(1e-15));
  // continuity at the boundary from below
  REQUIRE(walk_global_scale_factor(std::vector<double>{0.199999, 0.0}) ==
          Catch::Approx(1.0).margin(1e-4));
  REQUIRE_THROWS_AS(walk_global_scale_factor(std::vector<double>{0.1}), std::invalid_argument);
}

TEST_CASE("map_range is affine and does not clamp") {
  Range r{2.0, 6.0};
  REQUIRE(map_range(-1.0, r) == 2.0);
  REQUIRE(map_range(1.0, r) == 6.0);
  REQUIRE(map_range(0.0, r) == 4.0);
  REQUIRE(map_range(2.0, r) == 8.0);  // extrapolates
  REQUIRE(map_range(-3.0, r) == -2.0);
  Range sym{-0.08, 0.08};
  REQUIRE(map_range(0.0, sym) == 0.0);
  REQUIRE(map_range(0.5, sym) == Catch::Approx(0.04).margin(1e-15));
}

TEST_CASE("add_primitive applies the reversion scale to the action only") {
  std::vector<double> a = {1.0, -2.0};
  std::vector<double> p = {0.5, 0.5};
  auto full = add_primitive(a, p, 1.0);
  REQUIRE(full == std::vector<double>{1.5, -1.5});
  auto half = add_primitive(a, p, 0.5);
  REQUIRE(half == std::vector<double>{1.0, -0.5});
  auto none = add_primitive(a, p, 0.0);
  REQUIRE(none == p);
  REQUIRE_THROWS_AS(add_primitive(a, std::vector<double>{1.0}, 1.0), std::invalid_argument);
}

TEST_CASE("clamp_constraints clips into the boxes") {
  std::vector<double> pose = {0.5, -0.5, 0.01};
  std::vector<Range> boxes = {{-0.1, 0.1}, {-0.1, 0.1}, {-0.1, 0.1}};
  clamp_constraints(pose, boxes);
  REQUIRE(pose == std::vector<double>{0.1, -0.1, 0.01});
}

TEST_CASE("two link IK hits exact poses") {
  // fully stretched along x
  auto r = planar_two_link_ik(0.5, 0.0, 0.25, 0.25);
  REQUIRE_FALSE(r.clamped);
  REQUIRE(r.theta1 == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(r.theta2 == Catch::Approx(0.0).margin(1e-12));
  // folded onto itself: elbow angle pi
  auto f = planar_two_link_ik(0.0, 0.0, 0.25, 0.25);
  REQUIRE(f.theta2 == Catch::Approx(kPi).margin(1e-12));
  // right angle at the knee: r = l*sqrt(2)
  auto q = planar_two_link_ik(0.25, -0.25, 0.25, 0.25);
  REQUIRE(q.theta2 == Catch::Approx(kPi / 2).margin(1e-12));
}

TEST_CASE("two link IK round trips ten thousand reachable targets") {
  Rng rng(314);
  const double l1 = 0.25, l2 = 0.25;
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double r = rng.uniform(0.02, 0.499);
    double a = rng.uniform(-kPi, kPi);
    double x = r * std::cos(a), y = r * std::sin(a);
    auto ik = planar_two_link_ik(x, y, l1, l2);
    REQUIRE_FALSE(ik.clamped);
    double fx, fy;
    fk_two_link(ik.theta1, ik.theta2, l1, l2, fx, fy);
    worst = std::max({worst, std::abs(fx - x), std::abs(fy - y)});
  }
  REQUIRE(worst < 1e-10);
}

TEST_CASE("unreachable IK targets project onto the annulus and flag") {
  auto far = planar_two_link_ik(1.0, 0.0, 0.25, 0.25);
  REQUIRE(far.clamped);
  double fx, fy;
  fk_two_link(far.theta1, far.theta2, 0.25, 0.25, fx, fy);
  REQUIRE(fx == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(fy == Catch::Approx(0.0).margin(1e-12));

  auto inner = planar_two_link_ik(0.0, 0.05, 0.3, 0.2);  // below rmin = 0.1
  REQUIRE(inner.clamped);
  fk_two_link(inner.theta1, inner.theta2, 0.3, 0.2, fx, fy);
  REQUIRE(std::hypot(fx, fy) == Catch::Approx(0.1).margin(1e-12));
  REQUIRE_THROWS_AS(planar_two_link_ik(0.1, 0.1, 0.0, 0.2), std::domain_error);
}

TEST_CASE("proportional controller converges on an integrator plant") {
  const double gain = 15.0, dt = 0.02;
  double pos = 0.0;
  std::vector<double> last_cmd = {0.0};
  const double target = 0.3;
  for (int i = 0; i < 200; ++i) {
    auto cmd = proportional_control(std::vector<double>{target}, last_cmd,
                                    std::vector<double>{pos}, gain, dt);
    pos += cmd[0] * dt;  // plant integrates the command over one tick
    last_cmd = cmd;
  }
  REQUIRE(pos == Catch::Approx(target).margin(1e-6));
}

TEST_CASE("proportional controller compensates the one-step delay") {
  // predicted = observed + last_cmd*dt, so a repeated call with the plant
  // already moving toward target shrinks the command.
  auto cmd1 = proportional_control(std::vector<double>{1.0}, std::vector<double>{0.0},
                                   std::vector<double>{0.0}, 10.0, 0.02);
  REQUIRE(cmd1[0] == Catch::Approx(10.0).margin(1e-15));
  auto cmd2 = proportional_control(std::vector<double>{1.0}, std::vector<double>{10.0},
                                   std::vector<double>{0.0}, 10.0, 0.02);
  REQUIRE(cmd2[0] == Catch::Approx(10.0 * (1.0 - 0.2)).margin(1e-12));
}

TEST_CASE("bias stage honors its window") {
  PipelineConfig cfg;
  Stage map;
  map.kind = StageKind::kMapRange;
  map.ranges = {{-1.0, 1.0}};
  cfg.stages.push_back(map);
  Stage bias;
  bias.kind = StageKind::kBias;
  bias.bias = {0.5};
  bias.window_s = 0.04;
  cfg.stages.push_back(bias);
  PipelineRunner run(cfg);
  PipelineInputs in;
  in.elapsed_s = 0.0;
  REQUIRE(run.run(std::vector<double>{0.0}, in).values[0] == 0.5);
  in.elapsed_s = 0.02;
  REQUIRE(run.run(std::vector<double>{0.0}, in).values[0] == 0.5);
  in.elapsed_s = 0.04;  // window closed
  REQUIRE(run.run(std::vector<double>{0.0}, in).values[0] == 0.0);

  // permanent bias never expires
  cfg.stages[1].permanent = true;
  PipelineRunner run2(cfg);
  in.elapsed_s = 99.0;
  REQUIRE(run2.run(std::vector<double>{0.0}, in).values[0] == 0.5);
}

TEST_CASE("zero action passes the primitive and permanent bias through exactly") {
  PipelineConfig cfg;
  Stage ema;
  ema.kind = StageKind::kEma;
  ema.alpha = 0.2;
  cfg.stages.push_back(ema);
  Stage map;
  map.kind = StageKind::kMapRange;
  map.ranges = {{-0.08, 0.08}, {-0.08, 0.08}};
  cfg.stages.push_back(map);
  Stage scale;
  scale.kind = StageKind::kAssistedScale;
  cfg.stages.push_back(scale);
  cfg.stages.push_back(Stage{StageKind::kAddPrimitive});
  Stage bias;
  bias.kind = StageKind::kBias;
  bias.bias = {0.01, -0.01};
  bias.permanent = true;
  cfg.stages.push_back(bias);

  std::vector<double> prim = {0.003, 0.007};
  for (double lambda : {1.0, 0.5, 0.0}) {
    PipelineRunner run(cfg);
    PipelineInputs in;
    in.lambda_scale = lambda;
    in.primitive = prim;
    auto out = run.run(std::vector<double>{0.0, 0.0}, in);
    REQUIRE(out.values[0] == prim[0] + 0.01);
    REQUIRE(out.values[1] == prim[1] - 0.01);
  }
}

TEST_CASE("symmetry stage relabels only when mirrored") {
  PipelineConfig cfg;
  Stage sym;
  sym.kind = StageKind::kSymmetry;
  sym.spec = SymmetrySpec{{1, 0}, {1.0, 1.0}};
  cfg.stages.push_back(sym);
  PipelineRunner run(cfg);
  PipelineInputs in;
  auto a = run.run(std::vector<double>{1.0, 2.0}, in);
  REQUIRE(a.values == std::vector<double>{1.0, 2.0});
  in.mirrored = true;
  auto b = run.run(std::vector<double>{1.0, 2.0}, in);
  REQUIRE(b.values == std::vector<double>{2.0, 1.0});
}

TEST_CASE("walk preset composes into joint velocity commands") {
  auto cfg = make_pipeline("walk");
  PipelineRunner run(cfg);
  PipelineInputs in;
  std::vector<double> targp = {1.0, 0.0};  // no attenuation
  std::vector<double> prim = {0.0, 0.01, 0.0, 0.0, 0.0, 0.0};
  std::vector<double> observed(6, 0.0);
  in.targp = targp;
  in.primitive = prim;
  in.observed = observed;
  auto out = run.run(std::vector<double>{0.1, 0.0, -0.1, 0.0, 0.0, 0.0}, in);
  REQUIRE(out.values.size() == 6);
  REQUIRE_FALSE(out.ik_clamped);
  // identical repeated input converges to a fixed filtered pose; commands stay finite
  for (int i = 0; i < 50; ++i)
    out = run.run(std::vector<double>{0.1, 0.0, -0.1, 0.0, 0.0, 0.0}, in);
  for (double c : out.values) REQUIRE(std::isfinite(c));
}

TEST_CASE("pipeline run is deterministic given identical state and inputs") {
  auto cfg = make_pipeline("dribble");
  std::vector<double> raw = {0.3, -0.2, 0.1, 0.4, -0.5, 0.6};
  std::vector<double> prim = {0.0, 0.005, 0.0, 0.0, 0.0, 0.0};
  std::vector<double> obs = {0.1, 0.2, 0.1, 0.2, 0.0, 0.0};
  auto run_once = [&]() {
    PipelineRunner run(cfg);
    PipelineInputs in;
    in.primitive = prim;
    in.observed = obs;
    in.lambda_scale = 0.8;
    std::vector<double> last;
    for (int i = 0; i < 5; ++i) last = run.run(raw, in).values;
    return last;
  };
  auto a = run_once();
  auto b = run_once();
  REQUIRE(a == b);
}

TEST_CASE("pipeline JSON round trip preserves behavior") {
  auto cfg = make_pipeline("walk");
  auto j = to_json(cfg);
  auto back = pipeline_from_json(j);
  REQUIRE(back.stages.size() == cfg.stages.size());
  PipelineRunner r1(cfg), r2(back);
  PipelineInputs in;
  std::vector<double> targp = {0.05, 0.05};
  std::vector<double> prim = {0.0, 0.003, 0.0, 0.0, 0.0, 0.0};
  std::vector<double> obs(6, 0.05);
  in.targp = targp;
  in.primitive = prim;
  in.observed = obs;
  std::vector<double> raw = {0.2, 0.1, -0.3, 0.2, 0.5, -0.5};
  for (int i = 0; i < 3; ++i) {
    auto a = r1.run(raw, in);
    auto b = r2.run(raw, in);
    REQUIRE(a.values == b.values);
  }
  REQUIRE_THROWS_AS(pipeline_from_json(nlohmann::json{{"stages", {{{"type", "warp"}}}}}),
                    std::invalid_argument);
}

TEST_CASE("kick presets differ only in bias window") {
  auto ks = make_pipeline("kick_short");
  auto kl = make_pipeline("kick_long");
  REQUIRE(ks.stages.size() == 2);
  REQUIRE(ks.stages[1].window_s == 0.04);
  REQUIRE(kl.stages[1].window_s == 0.12);
  REQUIRE_THROWS_AS(make_pipeline("jump"), std::invalid_argument);
}

TEST_CASE("pipeline state serializes") {
  auto cfg = make_pipeline("srk");
  PipelineRunner run(cfg);
  PipelineInputs in;
  std::vector<double> prim(6, 0.1);
  std::vector<double> obs(6, 0.0);
  in.primitive = prim;
  in.observed = obs;
  run.run(std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6}, in);
  auto j = run.state().to_json();
  auto st = PipelineState::from_json(j);
  REQUIRE(st.ema == run.state().ema);
  REQUIRE(st.last_command == run.state().last_command);
}
