#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <symrl/common.hpp>
#include <symrl/env.hpp>
#include <symrl/nn.hpp>
#include <symrl/symmetry.hpp>

namespace symrl {

// ---------------------------------------------------------------------------
// Generalized advantage estimation.

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// done[t] set means s_{t+1} opened a fresh episode, so the bootstrap chain is
// cut there. `bootstrap_value` is V of the state after the last step.
inline GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                             double bootstrap_value, std::span<const std::uint8_t> dones,
                             double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw std::invalid_argument("compute_gae: length mismatch");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double acc = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double mask = dones[i] ? 0.0 : 1.0;
    const double next_v = (i + 1 < n) ? values[i + 1] : bootstrap_value;
    const double delta = rewards[i] + gamma * mask * next_v - values[i];
    acc = delta + gamma * lambda * mask * acc;
    out.advantages[i] = acc;
    out.returns[i] = acc + values[i];
  }
  return out;
}

// In-place shift to mean 0, std 1 (population std, stabilized by eps).
inline void normalize_advantages(std::span<double> adv, double eps = 1e-8) {
  if (adv.empty()) return;
  double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(adv.size());
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  var /= static_cast<double>(adv.size());
  const double scale = 1.0 / (std::sqrt(var) + eps);
  for (double& a : adv) a = (a - mean) * scale;
}

// ---------------------------------------------------------------------------
// Per-sample loss terms.

inline double sign_of(double x) { return (x > 0.0) - (x < 0.0); }

// One-sided clip: the bound moves with the advantage sign.
inline double clipped_surrogate(double ratio, double advantage, double clip_range) {
  if (clip_range <= 0.0) throw std::invalid_argument("clipped_surrogate: clip range must be > 0");
  const double clipped = (1.0 + sign_of(advantage) * clip_range) * advantage;
  return std::min(ratio * advantage, clipped);
}

// x_t = exp(logprob(mirrored action | mirrored state) - old logprob(a | s)).
inline double symmetry_ratio(const GaussianPolicy& policy, std::span<const double> obs,
                             std::span<const double> action, const SymmetrySpec& f,
                             const SymmetrySpec& g, double old_logprob) {
  const auto fs = apply_symmetry(f, obs);
  const auto ga = apply_symmetry(g, action);
  MlpTape tape;
  const auto& mu = forward(policy.mean, fs, tape);
  return std::exp(gaussian_logprob(mu, policy.log_std, ga) - old_logprob);
}

inline double psl_policy_loss(std::span<const double> x, double clip_range) {
  if (x.empty()) throw std::invalid_argument("psl_policy_loss: empty batch");
  if (clip_range <= 0.0) throw std::invalid_argument("psl_policy_loss: clip range must be > 0");
  double acc = 0.0;
  for (double v : x) acc += std::min(v, 1.0 + clip_range);
  return -acc / static_cast<double>(x.size());
}

// Mean squared error of the value net at mirrored states against the
// unmirrored targets. `mirrored_obs` is row-major [n][obs_dim].
inline double psl_value_loss(const Mlp& value, std::span<const double> mirrored_obs,
                             std::span<const double> targets) {
  const int d = value.input_dim();
  if (targets.empty() || mirrored_obs.size() != targets.size() * static_cast<std::size_t>(d))
    throw std::invalid_argument("psl_value_loss: dimension mismatch");
  MlpTape tape;
  double acc = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double v = forward(value, mirrored_obs.subspan(i * d, d), tape)[0];
    acc += (v - targets[i]) * (v - targets[i]);
  }
  return acc / static_cast<double>(targets.size());
}

// ---------------------------------------------------------------------------
// Policy + value bundle with a single flat parameter layout
// (mean net, log-std vector, value net).

struct ActorCritic {
  GaussianPolicy policy;
  Mlp value;

  static ActorCritic make(int obs_dim, int act_dim, const std::vector<int>& policy_hidden,
                          const std::vector<int>& value_hidden) {
    ActorCritic ac;
    ac.policy = GaussianPolicy::make(obs_dim, policy_hidden, act_dim);
    ac.value = Mlp::make(obs_dim, value_hidden, 1);
    return ac;
  }

  ActorCritic zeros_like() const {
    ActorCritic g = *this;
    g.policy.mean = policy.mean.zeros_like();
    std::fill(g.policy.log_std.begin(), g.policy.log_std.end(), 0.0);
    g.value = value.zeros_like();
    return g;
  }
};

inline constexpr double kInitialLogStd = -0.5;

inline void init_weights(ActorCritic& ac, Rng& rng) {
  init_weights(ac.policy.mean, rng, 0.01);
  std::fill(ac.policy.log_std.begin(), ac.policy.log_std.end(), kInitialLogStd);
  init_weights(ac.value, rng, 1.0);
}

inline std::size_t param_count(const ActorCritic& ac) {
  return param_count(ac.policy.mean) + ac.policy.log_std.size() + param_count(ac.value);
}

inline std::vector<double> flatten_params(const ActorCritic& ac) {
  std::vector<double> out(param_count(ac));
  double* p = out.data();
  flatten(ac.policy.mean, p);
  p += param_count(ac.policy.mean);
  p = std::copy(ac.policy.log_std.begin(), ac.policy.log_std.end(), p);
  flatten(ac.value, p);
  return out;
}

inline void unflatten_params(ActorCritic& ac, std::span<const double> in) {
  if (in.size() != param_count(ac)) throw std::invalid_argument("unflatten_params: size mismatch");
  const double* p = in.data();
  unflatten(ac.policy.mean, p);
  p += param_count(ac.policy.mean);
  std::copy(p, p + ac.policy.log_std.size(), ac.policy.log_std.begin());
  p += ac.policy.log_std.size();
  unflatten(ac.value, p);
}

// ---------------------------------------------------------------------------
// Rollout storage (row-major flat arrays).

struct RolloutBatch {
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<double> observations;
  std::vector<double> actions;
  std::vector<double> old_logprobs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;
  std::vector<double> advantages;
  std::vector<double> returns;
  // Mirrored copies, filled only when the environment declares mirror specs.
  std::vector<double> mirrored_observations;
  std::vector<double> mirrored_actions;

  int size() const { return static_cast<int>(old_logprobs.size()); }
  bool has_mirror() const { return !mirrored_observations.empty(); }

  std::span<const double> obs_row(int i) const {
    return {observations.data() + static_cast<std::size_t>(i) * obs_dim,
            static_cast<std::size_t>(obs_dim)};
  }
  std::span<const double> act_row(int i) const {
    return {actions.data() + static_cast<std::size_t>(i) * act_dim,
            static_cast<std::size_t>(act_dim)};
  }
  std::span<const double> mirrored_obs_row(int i) const {
    return {mirrored_observations.data() + static_cast<std::size_t>(i) * obs_dim,
            static_cast<std::size_t>(obs_dim)};
  }
  std::span<const double> mirrored_act_row(int i) const {
    return {mirrored_actions.data() + static_cast<std::size_t>(i) * act_dim,
            static_cast<std::size_t>(act_dim)};
  }
};

// ---------------------------------------------------------------------------
// Combined objective and its gradient.

struct LossWeights {
  double clip_range = 0.2;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  double psl_policy_weight = 0.0;
  double psl_value_weight = 0.0;
};

struct LossBreakdown {
  double objective = 0.0;   // the maximization target
  double total = 0.0;       // negated objective, handed to the minimizer
  double policy_term = 0.0; // mean clipped surrogate
  double value_loss = 0.0;  // mean squared value error, before the coefficient
  double entropy = 0.0;
  double psl_pi = 0.0;
  double psl_v = 0.0;
  double mean_x = 0.0;      // mean symmetry ratio before clipping
};

// Evaluates the surrogate objective on the indexed minibatch. When `grad` is
// non-null, accumulates d(total)/d(params) into it (caller clears). Ties at
// the min/clip switches contribute zero gradient. When `kinks` is non-null,
// every branch decision is recorded so finite differencing can avoid kinks.
inline LossBreakdown combined_loss(const RolloutBatch& b, std::span<const int> idx,
                                   const ActorCritic& ac, const LossWeights& w,
                                   ActorCritic* grad, KinkStats* kinks = nullptr) {
  if (idx.empty()) throw std::invalid_argument("combined_loss: empty minibatch");
  const bool want_psl = w.psl_policy_weight != 0.0 || w.psl_value_weight != 0.0;
  if (want_psl && !b.has_mirror())
    throw std::invalid_argument("combined_loss: symmetry weights set but batch has no mirror data");
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  const int act_dim = b.act_dim;
  const double clip_hi = 1.0 + w.clip_range;

  LossBreakdown out;
  MlpTape tape;
  std::vector<double> dmu(act_dim), dls(act_dim), dout(act_dim);
  std::vector<double> value_dout(1);

  for (int i : idx) {
    // clipped surrogate
    const auto& mu = forward(ac.policy.mean, b.obs_row(i), tape, kinks);
    double lp = gaussian_logprob_grad(mu, ac.policy.log_std, b.act_row(i), dmu, dls);
    const double ratio = std::exp(lp - b.old_logprobs[i]);
    const double adv = b.advantages[i];
    const double u = ratio * adv;
    const double clipped = (1.0 + sign_of(adv) * w.clip_range) * adv;
    const double surr = std::min(u, clipped);
    if (kinks) kinks->note(u - clipped, u < clipped);
    out.policy_term += surr * inv_n;
    if (grad && u < clipped) {
      // d surr / d logprob = ratio * adv = u
      const double c = -u * inv_n;
      for (int j = 0; j < act_dim; ++j) {
        dout[j] = c * dmu[j];
        grad->policy.log_std[j] += c * dls[j];
      }
      backward(ac.policy.mean, tape, dout, grad->policy.mean);
    }

    // value regression
    const double v = forward(ac.value, b.obs_row(i), tape, kinks)[0];
    const double verr = v - b.returns[i];
    out.value_loss += verr * verr * inv_n;
    if (grad) {
      value_dout[0] = w.value_coef * 2.0 * verr * inv_n;
      backward(ac.value, tape, value_dout, grad->value);
    }

    if (b.has_mirror()) {
      // mirrored-policy ratio, clipped from above only
      const auto& mu_m = forward(ac.policy.mean, b.mirrored_obs_row(i), tape, kinks);
      double lpm = gaussian_logprob_grad(mu_m, ac.policy.log_std, b.mirrored_act_row(i), dmu, dls);
      const double x = std::exp(lpm - b.old_logprobs[i]);
      const double xmin = std::min(x, clip_hi);
      if (kinks) kinks->note(x - clip_hi, x < clip_hi);
      out.mean_x += x * inv_n;
      out.psl_pi -= xmin * inv_n;
      if (grad && w.psl_policy_weight != 0.0 && x < clip_hi) {
        const double c = -w.psl_policy_weight * x * inv_n;
        for (int j = 0; j < act_dim; ++j) {
          dout[j] = c * dmu[j];
          grad->policy.log_std[j] += c * dls[j];
        }
        backward(ac.policy.mean, tape, dout, grad->policy.mean);
      }

      // value symmetry regression
      const double vm = forward(ac.value, b.mirrored_obs_row(i), tape, kinks)[0];
      const double merr = vm - b.returns[i];
      out.psl_v += merr * merr * inv_n;
      if (grad && w.psl_value_weight != 0.0) {
        value_dout[0] = w.psl_value_weight * 2.0 * merr * inv_n;
        backward(ac.value, tape, value_dout, grad->value);
      }
    }
  }

  out.entropy = gaussian_entropy(ac.policy.log_std);
  if (grad && w.entropy_coef != 0.0)
    for (int j = 0; j < act_dim; ++j) grad->policy.log_std[j] -= w.entropy_coef;

  out.objective = out.policy_term - w.value_coef * out.value_loss + w.entropy_coef * out.entropy -
                  (w.psl_policy_weight * out.psl_pi + w.psl_value_weight * out.psl_v);
  out.total = -out.objective;
  return out;
}

inline std::vector<double> flatten_grad(const ActorCritic& g) { return flatten_params(g); }

// Mean absolute gap between the mirrored-state policy mean and the mirrored
// policy mean, the quantity the symmetry losses push toward zero.
inline double policy_symmetry_divergence(const GaussianPolicy& policy,
                                         std::span<const double> observations,
                                         const SymmetrySpec& f, const SymmetrySpec& g) {
  const int d = policy.obs_dim();
  if (d == 0 || observations.size() % d != 0)
    throw std::invalid_argument("policy_symmetry_divergence: bad observation array");
  const std::size_t n = observations.size() / d;
  if (n == 0) throw std::invalid_argument("policy_symmetry_divergence: empty batch");
  MlpTape tape;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto obs = observations.subspan(i * d, d);
    const auto mu = forward(policy.mean, obs, tape);
    const auto g_mu = apply_symmetry(g, mu);
    const auto fs = apply_symmetry(f, obs);
    const auto& mu_f = forward(policy.mean, fs, tape);
    for (int j = 0; j < policy.action_dim(); ++j) acc += std::abs(mu_f[j] - g_mu[j]);
  }
  return acc / static_cast<double>(n * policy.action_dim());
}

// ---------------------------------------------------------------------------
// Shared epoch/minibatch pass over a collected batch. Minibatches that would
// run past the end of the shuffle order are skipped, so callers with a batch
// size that is not a multiple of mini_batch_size drop the tail each epoch.

struct OptimizeStats {
  double policy_term = 0.0;
  double value_loss = 0.0;
  double psl_pi = 0.0;
  double psl_v = 0.0;
  double mean_x = 0.0;
};

inline OptimizeStats run_optimization(const RolloutBatch& batch, ActorCritic& model,
                                      AdamState& adam, const AdamConfig& adam_cfg,
                                      Rng& shuffle_rng, const LossWeights& w, int epochs,
                                      int mini_batch_size, double lr) {
  const int total = batch.size();
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  ActorCritic grad = model.zeros_like();
  OptimizeStats s;
  int evals = 0;
  for (int e = 0; e < epochs; ++e) {
    for (int i = total - 1; i > 0; --i) {
      int k = shuffle_rng.uniform_int(i + 1);
      std::swap(order[i], order[k]);
    }
    for (int start = 0; start + mini_batch_size <= total; start += mini_batch_size) {
      std::span<const int> idx(order.data() + start, static_cast<std::size_t>(mini_batch_size));
      grad = model.zeros_like();
      LossBreakdown lb = combined_loss(batch, idx, model, w, &grad);
      auto flat_grad = flatten_params(grad);
      auto flat_params = flatten_params(model);
      adam_step(adam, adam_cfg, lr, flat_params, flat_grad);
      unflatten_params(model, flat_params);
      s.policy_term += lb.policy_term;
      s.value_loss += lb.value_loss;
      s.psl_pi += lb.psl_pi;
      s.psl_v += lb.psl_v;
      s.mean_x += lb.mean_x;
      evals += 1;
    }
  }
  if (evals > 0) {
    s.policy_term /= evals;
    s.value_loss /= evals;
    s.psl_pi /= evals;
    s.psl_v /= evals;
    s.mean_x /= evals;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Training configuration, mirroring the hyperparameter tables.

struct TrainConfig {
  std::string env;
  int batch_steps = 0;
  double clip_range = 0.2;
  double entropy_coefficient = 0.0;
  int environments = 1;
  int epochs = 1;
  double gae_lambda = 0.95;
  double gamma = 0.99;
  double learning_rate = 3e-4;
  std::string lr_scheduler = "constant";
  int mini_batch_size = 0;
  std::string nn_activation = "relu";
  std::vector<int> nn_policy_arch;
  std::vector<int> nn_value_arch;
  double psl_policy_weight = 0.0;
  double psl_value_weight = 0.0;
  std::int64_t total_time_steps = 0;
  double value_coefficient = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_steps < 1) throw std::invalid_argument("batch_steps must be >= 1");
    if (clip_range <= 0.0) throw std::invalid_argument("clip_range must be > 0");
    if (environments < 1) throw std::invalid_argument("environments must be >= 1");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (gae_lambda < 0.0 || gae_lambda > 1.0) throw std::invalid_argument("gae_lambda must be in [0,1]");
    if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("gamma must be in (0,1]");
    if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be > 0");
    if (lr_scheduler != "constant" && lr_scheduler != "linear")
      throw std::invalid_argument("lr_scheduler must be constant or linear");
    if (mini_batch_size < 1) throw std::invalid_argument("mini_batch_size must be >= 1");
    const std::int64_t per_update =
        static_cast<std::int64_t>(batch_steps) * static_cast<std::int64_t>(environments);
    if (per_update % mini_batch_size != 0)
      throw std::invalid_argument("mini_batch_size must divide batch_steps * environments");
    if (nn_activation != "relu") throw std::invalid_argument("nn_activation must be relu");
    for (int h : nn_policy_arch)
      if (h < 1) throw std::invalid_argument("nn_policy_arch entries must be >= 1");
    for (int h : nn_value_arch)
      if (h < 1) throw std::invalid_argument("nn_value_arch entries must be >= 1");
    if (psl_policy_weight < 0.0 || psl_value_weight < 0.0)
      throw std::invalid_argument("symmetry loss weights must be >= 0");
    if (total_time_steps < 1) throw std::invalid_argument("total_time_steps must be >= 1");
    if (value_coefficient < 0.0) throw std::invalid_argument("value_coefficient must be >= 0");
  }

  std::int64_t steps_per_update() const {
    return static_cast<std::int64_t>(batch_steps) * static_cast<std::int64_t>(environments);
  }
  std::int64_t updates_total() const {
    return (total_time_steps + steps_per_update() - 1) / steps_per_update();
  }
  double lr_at(std::int64_t env_steps_done) const {
    if (lr_scheduler == "linear") {
      double frac = 1.0 - static_cast<double>(env_steps_done) / static_cast<double>(total_time_steps);
      return learning_rate * std::max(0.0, frac);
    }
    return learning_rate;
  }
  LossWeights loss_weights() const {
    return {clip_range, entropy_coefficient, value_coefficient, psl_policy_weight, psl_value_weight};
  }
};

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& j, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument("config: missing key \"" + key + "\"");
  return *it;
}

inline void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& known) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw std::invalid_argument("config: unknown key \"" + it.key() + "\"");
}

}  // namespace detail

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  static const std::vector<std::string> known = {
      "env",           "batch_steps",      "clip_range",     "entropy_coefficient",
      "environments",  "epochs",           "gae_lambda",     "gamma",
      "learning_rate", "lr_scheduler",     "mini_batch_size", "nn_activation",
      "nn_policy_arch", "nn_value_arch",   "psl_policy_weight", "psl_value_weight",
      "total_time_steps", "value_coefficient", "seed"};
  detail::reject_unknown_keys(j, known);
  TrainConfig c;
  c.env = detail::require_key(j, "env").get<std::string>();
  c.batch_steps = detail::require_key(j, "batch_steps").get<int>();
  c.clip_range = detail::require_key(j, "clip_range").get<double>();
  c.entropy_coefficient = detail::require_key(j, "entropy_coefficient").get<double>();
  c.environments = detail::require_key(j, "environments").get<int>();
  c.epochs = detail::require_key(j, "epochs").get<int>();
  c.gae_lambda = detail::require_key(j, "gae_lambda").get<double>();
  c.gamma = detail::require_key(j, "gamma").get<double>();
  c.learning_rate = detail::require_key(j, "learning_rate").get<double>();
  c.lr_scheduler = detail::require_key(j, "lr_scheduler").get<std::string>();
  c.mini_batch_size = detail::require_key(j, "mini_batch_size").get<int>();
  if (j.contains("nn_activation")) c.nn_activation = j["nn_activation"].get<std::string>();
  c.nn_policy_arch = detail::require_key(j, "nn_policy_arch").get<std::vector<int>>();
  c.nn_value_arch = detail::require_key(j, "nn_value_arch").get<std::vector<int>>();
  if (j.contains("psl_policy_weight")) c.psl_policy_weight = j["psl_policy_weight"].get<double>();
  if (j.contains("psl_value_weight")) c.psl_value_weight = j["psl_value_weight"].get<double>();
  c.total_time_steps = detail::require_key(j, "total_time_steps").get<std::int64_t>();
  c.value_coefficient = detail::require_key(j, "value_coefficient").get<double>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  c.validate();
  return c;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{{"env", c.env},
                        {"batch_steps", c.batch_steps},
                        {"clip_range", c.clip_range},
                        {"entropy_coefficient", c.entropy_coefficient},
                        {"environments", c.environments},
                        {"epochs", c.epochs},
                        {"gae_lambda", c.gae_lambda},
                        {"gamma", c.gamma},
                        {"learning_rate", c.learning_rate},
                        {"lr_scheduler", c.lr_scheduler},
                        {"mini_batch_size", c.mini_batch_size},
                        {"nn_activation", c.nn_activation},
                        {"nn_policy_arch", c.nn_policy_arch},
                        {"nn_value_arch", c.nn_value_arch},
                        {"psl_policy_weight", c.psl_policy_weight},
                        {"psl_value_weight", c.psl_value_weight},
                        {"total_time_steps", c.total_time_steps},
                        {"value_coefficient", c.value_coefficient},
                        {"seed", c.seed}};
}

// ---------------------------------------------------------------------------
// Per-update metrics stream.

struct MetricsRow {
  std::int64_t update_index = 0;
  std::int64_t env_steps = 0;
  double mean_return = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double psl_pi = 0.0;
  double psl_v = 0.0;
  double mean_x_t = 0.0;
  double lr = 0.0;
};

inline std::string metrics_header() {
  return "update_index,env_steps,mean_return,policy_loss,value_loss,psl_pi,psl_v,mean_x_t,lr";
}

inline std::string to_csv_row(const MetricsRow& r) {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%lld,%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                static_cast<long long>(r.update_index), static_cast<long long>(r.env_steps),
                r.mean_return, r.policy_loss, r.value_loss, r.psl_pi, r.psl_v, r.mean_x_t, r.lr);
  return buf;
}

// ---------------------------------------------------------------------------
// The rollout/update loop. One worker per environment, each with its own
// dynamics and exploration RNG streams; batches merge in environment-index
// order, so scheduling cannot perturb results.

class Trainer {
 public:
  Trainer(const EnvFactory& factory, const TrainConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    for (int i = 0; i < cfg_.environments; ++i) {
      Worker w;
      w.env = factory(i);
      if (!w.env) throw std::invalid_argument("Trainer: factory returned null environment");
      w.env_rng = Rng(stream_seed(cfg_.seed, "env", i));
      w.act_rng = Rng(stream_seed(cfg_.seed, "act", i));
      workers_.push_back(std::move(w));
    }
    const auto& e0 = *workers_.front().env;
    obs_spec_ = e0.observation_symmetry();
    act_spec_ = e0.action_symmetry();
    const bool has_specs = obs_spec_.size() > 0 && act_spec_.size() > 0;
    if ((cfg_.psl_policy_weight > 0.0 || cfg_.psl_value_weight > 0.0) && !has_specs)
      throw std::invalid_argument("Trainer: symmetry loss weights set but environment has no mirror specs");
    if (has_specs) {
      auto vo = validate_spec(obs_spec_);
      auto va = validate_spec(act_spec_);
      if (!vo.ok() || !va.ok())
        throw std::invalid_argument("Trainer: environment mirror specs fail validation");
    }
    model_ = ActorCritic::make(e0.observation_size(), e0.action_size(), cfg_.nn_policy_arch,
                               cfg_.nn_value_arch);
    Rng init_rng(stream_seed(cfg_.seed, "init", 0));
    init_weights(model_, init_rng);
    adam_ = AdamState(param_count(model_));
    shuffle_rng_ = Rng(stream_seed(cfg_.seed, "shuffle", 0));
    for (auto& w : workers_) w.obs = w.env->reset(w.env_rng);
  }

  const TrainConfig& config() const { return cfg_; }
  const ActorCritic& model() const { return model_; }
  ActorCritic& model() { return model_; }
  std::int64_t update_index() const { return update_index_; }
  std::int64_t env_steps() const { return update_index_ * cfg_.steps_per_update(); }
  bool finished() const { return update_index_ >= cfg_.updates_total(); }
  const std::vector<MetricsRow>& metrics() const { return metrics_; }
  const RolloutBatch& last_batch() const { return batch_; }
  const SymmetrySpec& observation_spec() const { return obs_spec_; }
  const SymmetrySpec& action_spec() const { return act_spec_; }

  // One collect + optimize cycle; returns the metrics row it appended.
  MetricsRow update() {
    collect();
    const double lr = cfg_.lr_at(env_steps());
    optimize(lr);
    update_index_ += 1;
    MetricsRow row;
    row.update_index = update_index_;
    row.env_steps = env_steps();
    row.mean_return = mean_return_;
    row.policy_loss = stat_policy_;
    row.value_loss = stat_value_;
    row.psl_pi = stat_psl_pi_;
    row.psl_v = stat_psl_v_;
    row.mean_x_t = stat_mean_x_;
    row.lr = lr;
    metrics_.push_back(row);
    return row;
  }

  void run(const std::function<void(const MetricsRow&)>& on_update = {}) {
    while (!finished()) {
      MetricsRow row = update();
      if (on_update) on_update(row);
    }
  }

  nlohmann::json save_state() const {
    nlohmann::json j;
    j["format"] = 1;
    j["update_index"] = update_index_;
    j["params"] = flatten_params(model_);
    j["adam_t"] = adam_.t;
    j["adam_m"] = adam_.m;
    j["adam_v"] = adam_.v;
    j["shuffle_rng"] = shuffle_rng_.state();
    nlohmann::json ws = nlohmann::json::array();
    for (const auto& w : workers_) {
      ws.push_back({{"env", w.env->save_state()},
                    {"env_rng", w.env_rng.state()},
                    {"act_rng", w.act_rng.state()},
                    {"obs", w.obs},
                    {"episode_return", w.episode_return}});
    }
    j["workers"] = std::move(ws);
    j["mean_return"] = mean_return_;
    return j;
  }

  void load_state(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", 0) != 1)
      throw std::invalid_argument("Trainer::load_state: unrecognized format");
    update_index_ = j.at("update_index").get<std::int64_t>();
    auto params = j.at("params").get<std::vector<double>>();
    unflatten_params(model_, params);
    adam_.t = j.at("adam_t").get<std::int64_t>();
    adam_.m = j.at("adam_m").get<std::vector<double>>();
    adam_.v = j.at("adam_v").get<std::vector<double>>();
    if (adam_.m.size() != param_count(model_) || adam_.v.size() != param_count(model_))
      throw std::invalid_argument("Trainer::load_state: optimizer size mismatch");
    shuffle_rng_.set_state(j.at("shuffle_rng").get<std::string>());
    const auto& ws = j.at("workers");
    if (ws.size() != workers_.size())
      throw std::invalid_argument("Trainer::load_state: worker count mismatch");
    for (std::size_t i = 0; i < workers_.size(); ++i) {
      auto& w = workers_[i];
      w.env->load_state(ws[i].at("env"));
      w.env_rng.set_state(ws[i].at("env_rng").get<std::string>());
      w.act_rng.set_state(ws[i].at("act_rng").get<std::string>());
      w.obs = ws[i].at("obs").get<std::vector<double>>();
      w.episode_return = ws[i].at("episode_return").get<double>();
    }
    mean_return_ = j.at("mean_return").get<double>();
  }

 private:
  struct Worker {
    std::unique_ptr<Environment> env;
    Rng env_rng{0};
    Rng act_rng{0};
    std::vector<double> obs;
    double episode_return = 0.0;
  };

  void collect() {
    const int n_steps = cfg_.batch_steps;
    const int obs_dim = model_.policy.obs_dim();
    const int act_dim = model_.policy.action_dim();
    const int total = n_steps * cfg_.environments;
    batch_ = RolloutBatch{};
    batch_.obs_dim = obs_dim;
    batch_.act_dim = act_dim;
    batch_.observations.reserve(static_cast<std::size_t>(total) * obs_dim);
    batch_.actions.reserve(static_cast<std::size_t>(total) * act_dim);
    std::vector<double> completed_returns;
    double partial_sum = 0.0;

    MlpTape tape;
    std::vector<double> seg_rewards(n_steps), seg_values(n_steps);
    std::vector<std::uint8_t> seg_dones(n_steps);
    for (auto& w : workers_) {
      for (int t = 0; t < n_steps; ++t) {
        PolicySample s = sample_action(model_.policy, w.obs, w.act_rng, tape);
        const double v = forward(model_.value, w.obs, tape)[0];
        StepResult r = w.env->step(s.action, w.env_rng);
        batch_.observations.insert(batch_.observations.end(), w.obs.begin(), w.obs.end());
        batch_.actions.insert(batch_.actions.end(), s.action.begin(), s.action.end());
        batch_.old_logprobs.push_back(s.logprob);
        seg_rewards[t] = r.reward;
        seg_values[t] = v;
        seg_dones[t] = r.done ? 1 : 0;
        w.episode_return += r.reward;
        if (r.done) {
          completed_returns.push_back(w.episode_return);
          w.episode_return = 0.0;
          w.obs = w.env->reset(w.env_rng);
        } else {
          w.obs = std::move(r.observation);
        }
      }
      double bootstrap = seg_dones[n_steps - 1] ? 0.0 : forward(model_.value, w.obs, tape)[0];
      GaeResult gae =
          compute_gae(seg_rewards, seg_values, bootstrap, seg_dones, cfg_.gamma, cfg_.gae_lambda);
      batch_.rewards.insert(batch_.rewards.end(), seg_rewards.begin(), seg_rewards.end());
      batch_.values.insert(batch_.values.end(), seg_values.begin(), seg_values.end());
      batch_.dones.insert(batch_.dones.end(), seg_dones.begin(), seg_dones.end());
      batch_.advantages.insert(batch_.advantages.end(), gae.advantages.begin(),
                               gae.advantages.end());
      batch_.returns.insert(batch_.returns.end(), gae.returns.begin(), gae.returns.end());
      partial_sum += w.episode_return;
    }
    normalize_advantages(batch_.advantages);

    if (obs_spec_.size() > 0 && act_spec_.size() > 0) {
      batch_.mirrored_observations.resize(batch_.observations.size());
      batch_.mirrored_actions.resize(batch_.actions.size());
      for (int i = 0; i < batch_.size(); ++i) {
        auto mo = apply_symmetry(obs_spec_, batch_.obs_row(i));
        std::copy(mo.begin(), mo.end(),
                  batch_.mirrored_observations.begin() + static_cast<std::size_t>(i) * obs_dim);
        auto ma = apply_symmetry(act_spec_, batch_.act_row(i));
        std::copy(ma.begin(), ma.end(),
                  batch_.mirrored_actions.begin() + static_cast<std::size_t>(i) * act_dim);
      }
    }

    if (!completed_returns.empty()) {
      mean_return_ = std::accumulate(completed_returns.begin(), completed_returns.end(), 0.0) /
                     static_cast<double>(completed_returns.size());
    } else {
      mean_return_ = partial_sum / static_cast<double>(cfg_.environments);
    }
  }

  void optimize(double lr) {
    OptimizeStats s = run_optimization(batch_, model_, adam_, adam_cfg_, shuffle_rng_,
                                       cfg_.loss_weights(), cfg_.epochs, cfg_.mini_batch_size, lr);
    stat_policy_ = s.policy_term;
    stat_value_ = s.value_loss;
    stat_psl_pi_ = s.psl_pi;
    stat_psl_v_ = s.psl_v;
    stat_mean_x_ = s.mean_x;
  }

  TrainConfig cfg_;
  std::vector<Worker> workers_;
  SymmetrySpec obs_spec_, act_spec_;
  ActorCritic model_;
  AdamState adam_{0};
  AdamConfig adam_cfg_;
  Rng shuffle_rng_{0};
  RolloutBatch batch_;
  std::vector<MetricsRow> metrics_;
  std::int64_t update_index_ = 0;
  double mean_return_ = 0.0;
  double stat_policy_ = 0.0, stat_value_ = 0.0, stat_psl_pi_ = 0.0, stat_psl_v_ = 0.0,
         stat_mean_x_ = 0.0;
};

// ---------------------------------------------------------------------------
// Deterministic evaluation: mean action, no exploration noise.

struct EvalEpisode {
  int length = 0;
  double episode_return = 0.0;
};

inline EvalEpisode eval_episode(Environment& env, const GaussianPolicy& policy, Rng& rng,
                                int max_steps = 1000000) {
  EvalEpisode out;
  MlpTape tape;
  std::vector<double> obs = env.reset(rng);
  for (int t = 0; t < max_steps; ++t) {
    const auto& mu = forward(policy.mean, obs, tape);
    StepResult r = env.step(mu, rng);
    out.episode_return += r.reward;
    out.length += 1;
    if (r.done) break;
    obs = std::move(r.observation);
  }
  return out;
}

}  // namespace symrl
