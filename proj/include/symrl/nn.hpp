#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <symrl/common.hpp>

namespace symrl {

// Dense layer, weights row-major [out][in]. Hidden layers use rectifier
// activations, the output layer is identity. Everything is f64.
struct Layer {
  int in = 0;
  int out = 0;
  std::vector<double> w;
  std::vector<double> b;
};

struct Mlp {
  std::vector<Layer> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out; }

  static Mlp make(int in, const std::vector<int>& hidden, int out) {
    if (in <= 0 || out <= 0) throw std::invalid_argument("Mlp::make: bad dimensions");
    Mlp m;
    int prev = in;
    for (int h : hidden) {
      if (h <= 0) throw std::invalid_argument("Mlp::make: bad hidden width");
      m.layers.push_back({prev, h, std::vector<double>(static_cast<std::size_t>(h) * prev, 0.0),
                          std::vector<double>(h, 0.0)});
      prev = h;
    }
    m.layers.push_back({prev, out, std::vector<double>(static_cast<std::size_t>(out) * prev, 0.0),
                        std::vector<double>(out, 0.0)});
    return m;
  }

  // Same shapes, all values zero. Used as a gradient accumulator.
  Mlp zeros_like() const {
    Mlp g = *this;
    for (auto& l : g.layers) {
      std::fill(l.w.begin(), l.w.end(), 0.0);
      std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    return g;
  }
};

inline std::size_t param_count(const Mlp& m) {
  std::size_t n = 0;
  for (const auto& l : m.layers) n += l.w.size() + l.b.size();
  return n;
}

inline void flatten(const Mlp& m, double* out) {
  for (const auto& l : m.layers) {
    out = std::copy(l.w.begin(), l.w.end(), out);
    out = std::copy(l.b.begin(), l.b.end(), out);
  }
}

inline void unflatten(Mlp& m, const double* in) {
  for (auto& l : m.layers) {
    std::copy(in, in + l.w.size(), l.w.begin());
    in += l.w.size();
    std::copy(in, in + l.b.size(), l.b.begin());
    in += l.b.size();
  }
}

// Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)), biases 0.
// final_scale shrinks the last layer (policy heads start near-deterministic).
inline void init_weights(Mlp& m, Rng& rng, double final_scale = 1.0) {
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    auto& l = m.layers[k];
    double limit = std::sqrt(6.0 / (l.in + l.out));
    if (k + 1 == m.layers.size()) limit *= final_scale;
    for (auto& w : l.w) w = rng.uniform(-limit, limit);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
}

// Branch bookkeeping for the gradient checker: every rectifier, min and clip
// decision taken while evaluating a loss gets folded into a signature, along
// with the distance to the nearest branch boundary. Finite differencing is
// only trusted when both probes stay on the same side of every kink.
struct KinkStats {
  double min_distance = std::numeric_limits<double>::infinity();
  std::uint64_t signature = 1469598103934665603ull;

  void note(double distance, bool branch) {
    min_distance = std::min(min_distance, std::abs(distance));
    signature ^= branch ? 0x9e3779b97f4a7c15ull : 0x517cc1b727220a95ull;
    signature *= 1099511628211ull;
  }
};

struct MlpTape {
  std::vector<std::vector<double>> x;    // x[0] = input, x[k+1] = layer k output
  std::vector<std::vector<double>> pre;  // pre-activation of layer k
};

inline const std::vector<double>& forward(const Mlp& m, std::span<const double> input,
                                          MlpTape& tape, KinkStats* kinks = nullptr) {
  if (static_cast<int>(input.size()) != m.input_dim())
    throw std::invalid_argument("forward: input dimension mismatch");
  tape.x.resize(m.layers.size() + 1);
  tape.pre.resize(m.layers.size());
  tape.x[0].assign(input.begin(), input.end());
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const auto& l = m.layers[k];
    const auto& xin = tape.x[k];
    auto& pre = tape.pre[k];
    pre.resize(l.out);
    for (int o = 0; o < l.out; ++o) {
      const double* wr = l.w.data() + static_cast<std::size_t>(o) * l.in;
      double acc = l.b[o];
      for (int i = 0; i < l.in; ++i) acc += wr[i] * xin[i];
      pre[o] = acc;
    }
    auto& xout = tape.x[k + 1];
    xout.resize(l.out);
    const bool last = (k + 1 == m.layers.size());
    if (last) {
      xout = pre;
    } else {
      for (int o = 0; o < l.out; ++o) {
        bool active = pre[o] > 0.0;
        if (kinks) kinks->note(pre[o], active);
        xout[o] = active ? pre[o] : 0.0;
      }
    }
  }
  return tape.x.back();
}

inline std::vector<double> forward(const Mlp& m, std::span<const double> input) {
  MlpTape tape;
  return forward(m, input, tape);
}

// Reverse sweep. Accumulates parameter gradients into `grad` (same shapes as
// the net, not cleared here) and optionally writes d(loss)/d(input).
inline void backward(const Mlp& m, const MlpTape& tape, std::span<const double> dout,
                     Mlp& grad, std::vector<double>* dinput = nullptr) {
  if (static_cast<int>(dout.size()) != m.output_dim())
    throw std::invalid_argument("backward: output gradient dimension mismatch");
  std::vector<double> dpre(dout.begin(), dout.end());
  std::vector<double> dx;
  for (int k = static_cast<int>(m.layers.size()) - 1; k >= 0; --k) {
    const auto& l = m.layers[k];
    auto& gl = grad.layers[k];
    const auto& xin = tape.x[k];
    if (k + 1 < static_cast<int>(m.layers.size())) {
      // dpre currently holds d/d(post-activation); apply rectifier mask
      const auto& pre = tape.pre[k];
      for (int o = 0; o < l.out; ++o)
        if (pre[o] <= 0.0) dpre[o] = 0.0;
    }
    for (int o = 0; o < l.out; ++o) {
      double d = dpre[o];
      gl.b[o] += d;
      double* gw = gl.w.data() + static_cast<std::size_t>(o) * l.in;
      for (int i = 0; i < l.in; ++i) gw[i] += d * xin[i];
    }
    if (k > 0 || dinput) {
      dx.assign(l.in, 0.0);
      for (int o = 0; o < l.out; ++o) {
        double d = dpre[o];
        const double* wr = l.w.data() + static_cast<std::size_t>(o) * l.in;
        for (int i = 0; i < l.in; ++i) dx[i] += wr[i] * d;
      }
      dpre = dx;
    }
  }
  if (dinput) *dinput = dpre;
}

// ---------------------------------------------------------------------------
// Diagonal Gaussian policy: state-dependent mean, state-independent log-std.

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

struct GaussianPolicy {
  Mlp mean;
  std::vector<double> log_std;

  int obs_dim() const { return mean.input_dim(); }
  int action_dim() const { return mean.output_dim(); }

  static GaussianPolicy make(int obs, const std::vector<int>& hidden, int act) {
    GaussianPolicy p;
    p.mean = Mlp::make(obs, hidden, act);
    p.log_std.assign(act, 0.0);
    return p;
  }
};

inline std::size_t param_count(const GaussianPolicy& p) {
  return param_count(p.mean) + p.log_std.size();
}

inline double gaussian_logprob(std::span<const double> mu, std::span<const double> log_std,
                               std::span<const double> a) {
  if (mu.size() != log_std.size() || mu.size() != a.size())
    throw std::invalid_argument("gaussian_logprob: dimension mismatch");
  double lp = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    double s = std::exp(log_std[j]);
    double z = (a[j] - mu[j]) / s;
    lp += -0.5 * z * z - log_std[j] - kLogSqrt2Pi;
  }
  return lp;
}

// Also fills d(logprob)/d(mu) and d(logprob)/d(log_std).
inline double gaussian_logprob_grad(std::span<const double> mu, std::span<const double> log_std,
                                    std::span<const double> a, std::span<double> dmu,
                                    std::span<double> dlog_std) {
  double lp = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    double s = std::exp(log_std[j]);
    double z = (a[j] - mu[j]) / s;
    lp += -0.5 * z * z - log_std[j] - kLogSqrt2Pi;
    dmu[j] = z / s;
    dlog_std[j] = z * z - 1.0;
  }
  return lp;
}

inline double gaussian_entropy(std::span<const double> log_std) {
  double h = 0.0;
  for (double ls : log_std) h += ls + 0.5 + kLogSqrt2Pi;
  return h;
}

struct PolicySample {
  std::vector<double> action;
  std::vector<double> mean;
  double logprob = 0.0;
};

inline PolicySample sample_action(const GaussianPolicy& p, std::span<const double> obs,
                                  Rng& rng, MlpTape& tape) {
  PolicySample s;
  s.mean = forward(p.mean, obs, tape);
  s.action.resize(p.action_dim());
  for (int j = 0; j < p.action_dim(); ++j)
    s.action[j] = s.mean[j] + std::exp(p.log_std[j]) * rng.normal();
  s.logprob = gaussian_logprob(s.mean, p.log_std, s.action);
  return s;
}

// ---------------------------------------------------------------------------
// Adam over a flat parameter vector.

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t t = 0;
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(AdamState& st, const AdamConfig& cfg, double lr,
                      std::span<double> params, std::span<const double> grads) {
  if (params.size() != st.m.size() || grads.size() != st.m.size())
    throw std::invalid_argument("adam_step: size mismatch");
  st.t += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
    double mhat = st.m[i] / c1;
    double vhat = st.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

// ---------------------------------------------------------------------------
// Central finite-difference gradient verification.

struct LossProbe {
  double value = 0.0;
  KinkStats kinks;
};

struct CheckGradReport {
  double max_rel_err = 0.0;
  int checked = 0;
  int skipped_near_kink = 0;
  int worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// f must evaluate the loss at the supplied parameter vector without mutating
// external state. Coordinates whose +-h probes land on different sides of any
// rectifier/min/clip boundary (or within `kink_radius` of one) are skipped.
// When 0 < max_coords < n, a deterministic random subset is checked.
inline CheckGradReport check_grad(const std::function<LossProbe(std::span<const double>)>& f,
                                  std::span<const double> params,
                                  std::span<const double> analytic, double h = 1e-6,
                                  int max_coords = 0, std::uint64_t seed = 0,
                                  double kink_radius = 1e-6) {
  if (params.size() != analytic.size())
    throw std::invalid_argument("check_grad: gradient size mismatch");
  const std::size_t n = params.size();
  std::vector<std::size_t> coords(n);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (max_coords > 0 && static_cast<std::size_t>(max_coords) < n) {
    Rng rng(stream_seed(seed, "check_grad"));
    for (std::size_t i = n - 1; i > 0; --i)
      std::swap(coords[i], coords[rng.uniform_int(static_cast<int>(i + 1))]);
    coords.resize(max_coords);
  }
  std::vector<double> probe(params.begin(), params.end());
  CheckGradReport rep;
  for (std::size_t idx : coords) {
    const double orig = probe[idx];
    probe[idx] = orig + h;
    LossProbe up = f(probe);
    probe[idx] = orig - h;
    LossProbe dn = f(probe);
    probe[idx] = orig;
    if (up.kinks.signature != dn.kinks.signature ||
        std::min(up.kinks.min_distance, dn.kinks.min_distance) < kink_radius) {
      ++rep.skipped_near_kink;
      continue;
    }
    double numeric = (up.value - dn.value) / (2.0 * h);
    double ga = analytic[idx];
    double err = std::abs(ga - numeric) / std::max({1.0, std::abs(ga), std::abs(numeric)});
    ++rep.checked;
    if (err > rep.max_rel_err) {
      rep.max_rel_err = err;
      rep.worst_index = static_cast<int>(idx);
      rep.worst_analytic = ga;
      rep.worst_numeric = numeric;
    }
  }
  return rep;
}

}  // namespace symrl
