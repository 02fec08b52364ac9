#include <catch2/catch_amalgamated.hpp>

#include <symrl/common.hpp>
#include <symrl/nn.hpp>

using namespace symrl;

TEST_CASE("single affine layer reproduces a hand matrix product") {
  Mlp m = Mlp::make(2, {}, 2);
  m.layers[0].w = {1.0, 2.0, 3.0, 4.0};  // [[1 2],[3 4]]
  m.layers[0].b = {0.5, -0.5};
  auto y = forward(m, std::vector<double>{1.0, -1.0});
  REQUIRE(y[0] == Catch::Approx(1.0 - 2.0 + 0.5).margin(1e-15));
  REQUIRE(y[1] == Catch::Approx(3.0 - 4.0 - 0.5).margin(1e-15));
}

TEST_CASE("hidden rectifier zeroes negative pre-activations") {
  Mlp m = Mlp::make(1, {2}, 1);
  m.layers[0].w = {1.0, -1.0};
  m.layers[0].b = {0.0, 0.0};
  m.layers[1].w = {1.0, 1.0};
  m.layers[1].b = {0.0};
  // x=2: hidden = relu(2), relu(-2) = (2, 0) -> out 2
  REQUIRE(forward(m, std::vector<double>{2.0})[0] == 2.0);
  // x=-3: hidden = (0, 3) -> out 3
  REQUIRE(forward(m, std::vector<double>{-3.0})[0] == 3.0);
}

TEST_CASE("backward through an inactive rectifier gives zero input gradient") {
  Mlp m = Mlp::make(1, {1}, 1);
  m.layers[0].w = {1.0};
  m.layers[0].b = {0.0};
  m.layers[1].w = {1.0};
  m.layers[1].b = {0.0};
  MlpTape tape;
  forward(m, std::vector<double>{-1.0}, tape);
  Mlp grad = m.zeros_like();
  std::vector<double> dx;
  backward(m, tape, std::vector<double>{1.0}, grad, &dx);
  REQUIRE(dx[0] == 0.0);
  REQUIRE(grad.layers[0].w[0] == 0.0);

  forward(m, std::vector<double>{2.0}, tape);
  grad = m.zeros_like();
  backward(m, tape, std::vector<double>{1.0}, grad, &dx);
  REQUIRE(dx[0] == 1.0);
  REQUIRE(grad.layers[0].w[0] == 2.0);
}

TEST_CASE("analytic MLP gradient matches central differences") {
  Rng rng(42);
  Mlp m = Mlp::make(3, {5, 4}, 2);
  init_weights(m, rng);
  std::vector<double> x = {0.3, -0.7, 1.1};

  auto loss_at = [&](std::span<const double> flat) {
    Mlp probe = m;
    unflatten(probe, flat.data());
    MlpTape tape;
    KinkStats ks;
    auto y = forward(probe, x, tape, &ks);
    LossProbe p;
    for (double v : y) p.value += v * v;
    p.kinks = ks;
    return p;
  };

  std::vector<double> flat(param_count(m));
  flatten(m, flat.data());
  MlpTape tape;
  auto y = forward(m, x, tape);
  Mlp grad = m.zeros_like();
  std::vector<double> dout(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) dout[i] = 2.0 * y[i];
  backward(m, tape, dout, grad);
  std::vector<double> gflat(flat.size());
  flatten(grad, gflat.data());

  auto rep = check_grad(loss_at, flat, gflat);
  REQUIRE(rep.checked > 0);
  REQUIRE(rep.max_rel_err < 1e-7);
}

TEST_CASE("gaussian logprob closed forms") {
  std::vector<double> mu = {0.0};
  std::vector<double> ls = {0.0};
  // standard normal at its mean: -0.5*log(2*pi)
  REQUIRE(gaussian_logprob(mu, ls, std::vector<double>{0.0}) ==
          Catch::Approx(-0.91893853320467274178).margin(1e-15));
  // one sigma away subtracts exactly 1/2
  REQUIRE(gaussian_logprob(mu, ls, std::vector<double>{1.0}) ==
          Catch::Approx(-1.41893853320467274178).margin(1e-15));
  // scale 2: subtract log 2, z halves
  std::vector<double> ls2 = {std::log(2.0)};
  REQUIRE(gaussian_logprob(mu, ls2, std::vector<double>{2.0}) ==
          Catch::Approx(-0.5 - std::log(2.0) - 0.91893853320467274178).margin(1e-14));
  // independent dimensions add
  std::vector<double> mu2 = {0.0, 1.0}, ls3 = {0.0, 0.0};
  REQUIRE(gaussian_logprob(mu2, ls3, std::vector<double>{0.0, 1.0}) ==
          Catch::Approx(2.0 * -0.91893853320467274178).margin(1e-14));
}

TEST_CASE("density integrates to one on a fine grid") {
  std::vector<double> mu = {0.3}, ls = {std::log(0.7)};
  double total = 0.0;
  const double lo = -6.0, hi = 6.0;
  const int n = 20000;
  const double dx = (hi - lo) / n;
  for (int i = 0; i < n; ++i) {
    double a = lo + (i + 0.5) * dx;
    total += std::exp(gaussian_logprob(mu, ls, std::span<const double>(&a, 1))) * dx;
  }
  REQUIRE(total == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("logprob gradients match finite differences") {
  std::vector<double> mu = {0.4, -1.2}, ls = {0.1, -0.3}, a = {0.9, -1.0};
  std::vector<double> dmu(2), dls(2);
  gaussian_logprob_grad(mu, ls, a, dmu, dls);
  const double h = 1e-7;
  for (int j = 0; j < 2; ++j) {
    auto mup = mu, mum = mu;
    mup[j] += h;
    mum[j] -= h;
    double fd = (gaussian_logprob(mup, ls, a) - gaussian_logprob(mum, ls, a)) / (2 * h);
    REQUIRE(dmu[j] == Catch::Approx(fd).margin(1e-6));
    auto lsp = ls, lsm = ls;
    lsp[j] += h;
    lsm[j] -= h;
    double fd2 = (gaussian_logprob(mu, lsp, a) - gaussian_logprob(mu, lsm, a)) / (2 * h);
    REQUIRE(dls[j] == Catch::Approx(fd2).margin(1e-6));
  }
}

TEST_CASE("entropy closed form") {
  std::vector<double> ls = {0.0};
  REQUIRE(gaussian_entropy(ls) == Catch::Approx(1.41893853320467274178).margin(1e-15));
  std::vector<double> ls2 = {0.5, -0.5};
  REQUIRE(gaussian_entropy(ls2) ==
          Catch::Approx(2.0 * 1.41893853320467274178).margin(1e-14));
}

TEST_CASE("adam matches a hand-stepped scalar recurrence") {
  AdamConfig cfg;
  AdamState st(1);
  std::vector<double> x = {1.0};
  // oracle state
  double m = 0.0, v = 0.0, xo = 1.0;
  const double lr = 0.1;
  for (int t = 1; t <= 25; ++t) {
    double g = 2.0 * x[0];  // d/dx of x^2
    std::vector<double> grad = {g};
    adam_step(st, cfg, lr, x, grad);

    double go = 2.0 * xo;
    m = cfg.beta1 * m + (1 - cfg.beta1) * go;
    v = cfg.beta2 * v + (1 - cfg.beta2) * go * go;
    double mhat = m / (1 - std::pow(cfg.beta1, t));
    double vhat = v / (1 - std::pow(cfg.beta2, t));
    xo -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    REQUIRE(x[0] == Catch::Approx(xo).margin(1e-15));
  }
  REQUIRE(std::abs(x[0]) < 1.0);  // descending on a convex bowl
}

TEST_CASE("first adam step has magnitude close to the learning rate") {
  AdamConfig cfg;
  AdamState st(1);
  std::vector<double> x = {5.0};
  std::vector<double> g = {37.5};
  adam_step(st, cfg, 0.01, x, g);
  // mhat/sqrt(vhat) == g/|g| up to eps
  REQUIRE(5.0 - x[0] == Catch::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("adam state size mismatch throws") {
  AdamState st(2);
  std::vector<double> x = {1.0};
  std::vector<double> g = {1.0};
  REQUIRE_THROWS_AS(adam_step(st, AdamConfig{}, 0.1, x, g), std::invalid_argument);
}

TEST_CASE("check_grad accepts an exact quadratic gradient") {
  std::vector<double> p = {0.5, -1.5, 2.0};
  std::vector<double> g = {0.5, -1.5, 2.0};
  auto f = [](std::span<const double> q) {
    LossProbe pr;
    for (double x : q) pr.value += 0.5 * x * x;
    return pr;
  };
  auto rep = check_grad(f, p, g);
  REQUIRE(rep.checked == 3);
  REQUIRE(rep.max_rel_err < 1e-9);
}

TEST_CASE("check_grad flags a corrupted gradient") {
  std::vector<double> p = {1.0, 2.0};
  std::vector<double> g = {1.0, 2.6};  // true grad is (1, 2)
  auto f = [](std::span<const double> q) {
    LossProbe pr;
    for (double x : q) pr.value += 0.5 * x * x;
    return pr;
  };
  auto rep = check_grad(f, p, g);
  REQUIRE(rep.max_rel_err > 0.1);
  REQUIRE(rep.worst_index == 1);
}

TEST_CASE("check_grad skips coordinates whose probes straddle a kink") {
  // f(x) = relu(x) probed at x = 0.5e-6 with h = 1e-6 crosses zero
  std::vector<double> p = {0.5e-6};
  std::vector<double> g = {1.0};
  auto f = [](std::span<const double> q) {
    LossProbe pr;
    KinkStats ks;
    bool active = q[0] > 0.0;
    ks.note(q[0], active);
    pr.value = active ? q[0] : 0.0;
    pr.kinks = ks;
    return pr;
  };
  auto rep = check_grad(f, p, g);
  REQUIRE(rep.checked == 0);
  REQUIRE(rep.skipped_near_kink == 1);
}

TEST_CASE("check_grad subsampling checks the requested coordinate count") {
  std::vector<double> p(500, 0.25);
  std::vector<double> g(500, 0.5);
  auto f = [](std::span<const double> q) {
    LossProbe pr;
    for (double x : q) pr.value += 0.25 * x * x;
    return pr;
  };
  auto rep = check_grad(f, p, g, 1e-6, 200, 7);
  REQUIRE(rep.checked == 200);
  REQUIRE(rep.max_rel_err > 0.3);  // analytic 0.5 vs true 0.125
}

TEST_CASE("weight init stays inside the fan-scaled bound and zeroes biases") {
  Rng rng(5);
  Mlp m = Mlp::make(10, {8}, 4);
  init_weights(m, rng, 0.01);
  double lim0 = std::sqrt(6.0 / 18.0);
  for (double w : m.layers[0].w) REQUIRE(std::abs(w) <= lim0);
  for (double b : m.layers[0].b) REQUIRE(b == 0.0);
  double lim1 = 0.01 * std::sqrt(6.0 / 12.0);
  for (double w : m.layers[1].w) REQUIRE(std::abs(w) <= lim1);
  bool any = false;
  for (double w : m.layers[1].w) any |= (w != 0.0);
  REQUIRE(any);
}

TEST_CASE("flatten and unflatten round trip") {
  Rng rng(11);
  Mlp m = Mlp::make(4, {3}, 2);
  init_weights(m, rng);
  std::vector<double> flat(param_count(m));
  flatten(m, flat.data());
  Mlp m2 = Mlp::make(4, {3}, 2);
  unflatten(m2, flat.data());
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    REQUIRE(m2.layers[k].w == m.layers[k].w);
    REQUIRE(m2.layers[k].b == m.layers[k].b);
  }
}

TEST_CASE("sampled actions have the right first two moments") {
  Rng rng(123);
  GaussianPolicy p = GaussianPolicy::make(2, {}, 1);
  p.mean.layers[0].w = {0.0, 0.0};
  p.mean.layers[0].b = {0.7};
  p.log_std = {std::log(0.5)};
  MlpTape tape;
  std::vector<double> obs = {0.0, 0.0};
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    auto s = sample_action(p, obs, rng, tape);
    sum += s.action[0];
    sum2 += s.action[0] * s.action[0];
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  REQUIRE(mean == Catch::Approx(0.7).margin(5e-3));
  REQUIRE(var == Catch::Approx(0.25).margin(5e-3));
}
