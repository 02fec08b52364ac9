// Command implementations behind the symrl binary: training runs with
// manifest/checkpoint/metrics plumbing, deterministic evaluation with replay
// logs, gradient verification, and CSV exports. Exit codes: 0 ok, 1 usage or
// failed check, 2 validation, 3 runtime.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <symrl/envs.hpp>
#include <symrl/nn.hpp>
#include <symrl/ppo.hpp>
#include <symrl/push.hpp>

namespace symrl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

namespace cli_detail {

namespace fs = std::filesystem;

// Checkpoint files carry a one-line JSON header followed by a raw blob of
// little-endian 64-bit floats; the header's blob_sizes lists the segments.
inline void write_doubles_le(std::ofstream& os, const std::vector<double>& v) {
  for (double d : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
  }
}

inline std::vector<double> read_doubles_le(std::ifstream& is, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("checkpoint: truncated parameter blob");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&v[k], &bits, sizeof(double));
  }
  return v;
}

inline void write_checkpoint_file(const fs::path& path, const nlohmann::json& header,
                                  const std::vector<double>& blob) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + tmp.string());
    os << header.dump() << '\n';
    write_doubles_le(os, blob);
    if (!os) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::pair<nlohmann::json, std::vector<double>> read_checkpoint_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("checkpoint: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("checkpoint: missing header");
  nlohmann::json header = nlohmann::json::parse(line);
  std::size_t total = 0;
  if (header.contains("blob_sizes"))
    for (auto n : header["blob_sizes"]) total += n.get<std::size_t>();
  if (header.contains("ll"))
    for (const char* lvl : {"ll", "hl"})
      for (auto n : header[lvl]["blob_sizes"]) total += n.get<std::size_t>();
  return {header, read_doubles_le(is, total)};
}

// Pull the named double arrays out of a state object and append them to the
// blob; the returned sizes go into the header so the load can reverse it.
inline std::vector<std::size_t> extract_arrays(nlohmann::json& state,
                                               const std::vector<std::string>& keys,
                                               std::vector<double>& blob) {
  std::vector<std::size_t> sizes;
  for (const auto& key : keys) {
    auto v = state.at(key).get<std::vector<double>>();
    sizes.push_back(v.size());
    blob.insert(blob.end(), v.begin(), v.end());
    state.erase(key);
  }
  return sizes;
}

inline std::size_t restore_arrays(nlohmann::json& state, const std::vector<std::string>& keys,
                                  const std::vector<std::size_t>& sizes,
                                  const std::vector<double>& blob, std::size_t offset) {
  for (std::size_t i = 0; i < keys.size(); ++i) {
    state[keys[i]] = std::vector<double>(blob.begin() + offset, blob.begin() + offset + sizes[i]);
    offset += sizes[i];
  }
  return offset;
}

inline const std::vector<std::string>& adam_keys() {
  static const std::vector<std::string> k = {"params", "adam_m", "adam_v"};
  return k;
}

inline void save_trainer_checkpoint(const fs::path& path, const Trainer& t) {
  nlohmann::json state = t.save_state();
  std::vector<double> blob;
  auto sizes = extract_arrays(state, adam_keys(), blob);
  const TrainConfig& c = t.config();
  nlohmann::json header = {{"format", 1},
                           {"kind", "ppo"},
                           {"env", c.env},
                           {"seed", c.seed},
                           {"update_index", t.update_index()},
                           {"env_steps", t.env_steps()},
                           {"obs_dim", t.model().policy.obs_dim()},
                           {"act_dim", t.model().policy.action_dim()},
                           {"policy_arch", c.nn_policy_arch},
                           {"value_arch", c.nn_value_arch},
                           {"blob_sizes", sizes}};
  header["state"] = std::move(state);
  write_checkpoint_file(path, header, blob);
}

inline void load_trainer_checkpoint(const nlohmann::json& header, const std::vector<double>& blob,
                                    Trainer& t) {
  nlohmann::json state = header.at("state");
  restore_arrays(state, adam_keys(),
                 header.at("blob_sizes").get<std::vector<std::size_t>>(), blob, 0);
  t.load_state(state);
}

inline void save_push_checkpoint(const fs::path& path, const PushTrainer& t) {
  nlohmann::json state = t.save_state();
  std::vector<double> blob;
  auto ll_sizes = extract_arrays(state.at("ll"), adam_keys(), blob);
  auto hl_sizes = extract_arrays(state.at("hl"), adam_keys(), blob);
  const PushTrainConfig& c = t.config();
  nlohmann::json header = {
      {"format", 1},
      {"kind", "push"},
      {"env", "push_arena"},
      {"seed", c.seed},
      {"update_index", t.ll_update_index()},
      {"ll", {{"obs_dim", PushArena::kLlObsSize},
              {"act_dim", PushArena::kLlActSize},
              {"policy_arch", c.ll.nn_policy_arch},
              {"value_arch", c.ll.nn_value_arch},
              {"update_index", t.ll_update_index()},
              {"env_steps", t.ll_env_steps()},
              {"blob_sizes", ll_sizes}}},
      {"hl", {{"obs_dim", RadarConfig{}.frame_size()},
              {"act_dim", 1},
              {"policy_arch", c.hl.nn_policy_arch},
              {"value_arch", c.hl.nn_value_arch},
              {"update_index", t.hl_update_index()},
              {"env_steps", t.hl_env_steps()},
              {"blob_sizes", hl_sizes}}}};
  header["state"] = std::move(state);
  write_checkpoint_file(path, header, blob);
}

inline void load_push_checkpoint(const nlohmann::json& header, const std::vector<double>& blob,
                                 PushTrainer& t) {
  nlohmann::json state = header.at("state");
  std::size_t off = restore_arrays(state.at("ll"), adam_keys(),
                                   header.at("ll").at("blob_sizes").get<std::vector<std::size_t>>(),
                                   blob, 0);
  restore_arrays(state.at("hl"), adam_keys(),
                 header.at("hl").at("blob_sizes").get<std::vector<std::size_t>>(), blob, off);
  t.load_state(state);
}

// Rebuild just the networks from a checkpoint, for evaluation.
inline ActorCritic model_from_header(const nlohmann::json& node, const std::vector<double>& blob,
                                     std::size_t offset) {
  ActorCritic model = ActorCritic::make(node.at("obs_dim").get<int>(), node.at("act_dim").get<int>(),
                                        node.at("policy_arch").get<std::vector<int>>(),
                                        node.at("value_arch").get<std::vector<int>>());
  auto sizes = node.at("blob_sizes").get<std::vector<std::size_t>>();
  if (sizes.empty() || sizes[0] != param_count(model))
    throw std::invalid_argument("checkpoint: parameter count does not match the recorded dims");
  std::vector<double> params(blob.begin() + offset, blob.begin() + offset + sizes[0]);
  unflatten_params(model, params);
  return model;
}

inline std::size_t level_blob_span(const nlohmann::json& node) {
  std::size_t n = 0;
  for (auto s : node.at("blob_sizes")) n += s.get<std::size_t>();
  return n;
}

// --- config / manifest -----------------------------------------------

inline nlohmann::json parse_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open " + path.string());
  // comments allowed so config presets can annotate their provenance
  return nlohmann::json::parse(is, nullptr, true, true);
}

inline nlohmann::json resolved_config_json(const nlohmann::json& raw) {
  if (raw.value("env", "") == "push_arena") return push_config_to_json(push_config_from_json(raw));
  return train_config_to_json(train_config_from_json(raw));
}

inline std::string csv_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void truncate_metrics_csv(const fs::path& path, std::int64_t keep_max_update) {
  std::vector<std::string> kept;
  kept.push_back(metrics_header());
  std::ifstream is(path);
  std::string line;
  bool first = true;
  while (is && std::getline(is, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    std::int64_t idx = std::strtoll(line.c_str(), nullptr, 10);
    if (idx <= keep_max_update) kept.push_back(line);
  }
  std::ofstream os(path, std::ios::trunc);
  for (const auto& l : kept) os << l << '\n';
}

inline fs::path checkpoint_path(const fs::path& out, std::int64_t update) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "ckpt_%08lld.bin", static_cast<long long>(update));
  return out / buf;
}

inline std::optional<fs::path> latest_checkpoint(const fs::path& out) {
  std::optional<fs::path> best;
  std::int64_t best_idx = -1;
  if (!fs::exists(out)) return best;
  for (const auto& e : fs::directory_iterator(out)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("ckpt_", 0) != 0 || name.size() < 10) continue;
    std::int64_t idx = std::strtoll(name.c_str() + 5, nullptr, 10);
    if (idx > best_idx) {
      best_idx = idx;
      best = e.path();
    }
  }
  return best;
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------
// train

inline EnvFactory environment_factory(const std::string& kind) {
  return [kind](int) { return make_environment(kind); };
}

inline int run_train(const std::string& config_path, std::optional<std::uint64_t> seed_flag,
                     const std::string& out_dir, int ckpt_every) {
  namespace fs = std::filesystem;
  using namespace cli_detail;
  try {
    if (ckpt_every < 1) {
      std::fprintf(stderr, "train: checkpoint cadence must be >= 1\n");
      return kExitValidation;
    }
    nlohmann::json raw;
    try {
      raw = parse_json_file(config_path);
    } catch (const nlohmann::json::parse_error& e) {
      std::fprintf(stderr, "train: config parse error: %s\n", e.what());
      return kExitValidation;
    }
    if (seed_flag) raw["seed"] = *seed_flag;
    nlohmann::json resolved;
    try {
      resolved = resolved_config_json(raw);
    } catch (const std::invalid_argument& e) {
      std::fprintf(stderr, "train: invalid config: %s\n", e.what());
      return kExitValidation;
    }

    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    const fs::path manifest_path = out / "manifest.json";
    bool resume = false;
    if (fs::exists(manifest_path)) {
      nlohmann::json manifest = parse_json_file(manifest_path);
      if (manifest.value("config", nlohmann::json{}) != resolved) {
        std::fprintf(stderr,
                     "train: %s already holds a run with a different configuration; "
                     "use a fresh output directory\n",
                     out_dir.c_str());
        return kExitValidation;
      }
      resume = true;
    } else {
      nlohmann::json manifest = {{"config_path", config_path},
                                 {"seed", resolved.value("seed", std::uint64_t{0})},
                                 {"out_dir", out_dir},
                                 {"checkpoint_every", ckpt_every},
                                 {"config", resolved}};
      std::ofstream ms(manifest_path, std::ios::trunc);
      if (!ms) throw std::runtime_error("cannot write " + manifest_path.string());
      ms << manifest.dump(2) << '\n';
    }

    if (resolved.value("env", "") == "push_arena") {
      PushTrainConfig cfg = push_config_from_json(resolved);
      PushTrainer trainer(cfg);
      const fs::path ll_csv = out / "metrics_ll.csv";
      const fs::path hl_csv = out / "metrics_hl.csv";
      if (resume) {
        auto ckpt = latest_checkpoint(out);
        if (ckpt) {
          auto [header, blob] = read_checkpoint_file(*ckpt);
          load_push_checkpoint(header, blob, trainer);
        }
      }
      truncate_metrics_csv(ll_csv, trainer.ll_update_index());
      truncate_metrics_csv(hl_csv, trainer.hl_update_index());
      std::ofstream llm(ll_csv, std::ios::app);
      std::ofstream hlm(hl_csv, std::ios::app);
      std::size_t ll_written = 0, hl_written = 0;
      std::int64_t last_ckpt = trainer.ll_update_index();
      while (!trainer.finished()) {
        trainer.step();
        for (; ll_written < trainer.ll_metrics().size(); ++ll_written)
          llm << to_csv_row(trainer.ll_metrics()[ll_written]) << '\n' << std::flush;
        for (; hl_written < trainer.hl_metrics().size(); ++hl_written)
          hlm << to_csv_row(trainer.hl_metrics()[hl_written]) << '\n' << std::flush;
        if (trainer.ll_update_index() >= last_ckpt + ckpt_every) {
          save_push_checkpoint(checkpoint_path(out, trainer.ll_update_index()), trainer);
          last_ckpt = trainer.ll_update_index();
        }
      }
      if (trainer.ll_update_index() != last_ckpt || !latest_checkpoint(out))
        save_push_checkpoint(checkpoint_path(out, trainer.ll_update_index()), trainer);
      std::printf("trained push_arena: %lld low-level steps (%lld updates), "
                  "%lld high-level steps (%lld updates)\n",
                  static_cast<long long>(trainer.ll_env_steps()),
                  static_cast<long long>(trainer.ll_update_index()),
                  static_cast<long long>(trainer.hl_env_steps()),
                  static_cast<long long>(trainer.hl_update_index()));
      return kExitOk;
    }

    TrainConfig cfg = train_config_from_json(resolved);
    Trainer trainer(environment_factory(cfg.env), cfg);
    if (resume) {
      auto ckpt = latest_checkpoint(out);
      if (ckpt) {
        auto [header, blob] = read_checkpoint_file(*ckpt);
        load_trainer_checkpoint(header, blob, trainer);
      }
    }
    const fs::path csv = out / "metrics.csv";
    truncate_metrics_csv(csv, trainer.update_index());
    std::ofstream ms(csv, std::ios::app);
    std::int64_t last_ckpt = trainer.update_index();
    while (!trainer.finished()) {
      MetricsRow row = trainer.update();
      ms << to_csv_row(row) << '\n' << std::flush;
      if (row.update_index >= last_ckpt + ckpt_every) {
        save_trainer_checkpoint(checkpoint_path(out, row.update_index), trainer);
        last_ckpt = row.update_index;
      }
    }
    if (trainer.update_index() != last_ckpt || !latest_checkpoint(out))
      save_trainer_checkpoint(checkpoint_path(out, trainer.update_index()), trainer);
    std::printf("trained %s: %lld env steps in %lld updates\n", cfg.env.c_str(),
                static_cast<long long>(trainer.env_steps()),
                static_cast<long long>(trainer.update_index()));
    return kExitOk;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "train: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "train: %s\n", e.what());
    return kExitRuntime;
  }
}

// ---------------------------------------------------------------------------
// eval

inline int run_eval(const std::string& ckpt_path, const std::string& env_kind, int episodes,
                    std::uint64_t seed, std::optional<std::string> out_flag) {
  namespace fs = std::filesystem;
  using namespace cli_detail;
  try {
    if (episodes < 0) {
      std::fprintf(stderr, "eval: episodes must be >= 0\n");
      return kExitValidation;
    }
    auto [header, blob] = read_checkpoint_file(ckpt_path);
    const std::string kind = header.value("kind", "");
    const fs::path out = out_flag ? fs::path(*out_flag) : fs::path(ckpt_path).parent_path();
    fs::create_directories(out);
    std::ofstream ep_csv(out / "episodes.csv", std::ios::trunc);
    std::ofstream replay(out / "replay.jsonl", std::ios::trunc);
    ep_csv << "episode,length,return\n";

    std::vector<double> returns;
    std::vector<std::int64_t> lengths;

    if (kind == "push") {
      if (env_kind != "push_arena") {
        std::fprintf(stderr, "eval: this checkpoint drives the push arena; pass --env push_arena\n");
        return kExitValidation;
      }
      ActorCritic ll = model_from_header(header.at("ll"), blob, 0);
      ActorCritic hl = model_from_header(header.at("hl"), blob, level_blob_span(header.at("ll")));
      for (int e = 0; e < episodes; ++e) {
        PushArena arena;
        Rng rng(stream_seed(seed, "eval", e));
        std::int64_t t = 0;
        PushEvalResult r = push_eval_episode(arena, ll, hl, rng, 200000,
                                             [&](const PushArena& ar) {
                                               nlohmann::json rec = ar.replay_record();
                                               rec["episode"] = e;
                                               rec["t"] = t;
                                               rec["time"] = static_cast<double>(t) * kEnvDt;
                                               replay << rec.dump() << '\n';
                                               ++t;
                                             });
        returns.push_back(r.hl_return);
        lengths.push_back(r.ticks);
        ep_csv << e << ',' << r.ticks << ',' << csv_double(r.hl_return) << '\n';
      }
    } else if (kind == "ppo") {
      std::unique_ptr<Environment> env;
      try {
        env = make_environment(env_kind);
      } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "eval: %s\n", e.what());
        return kExitValidation;
      }
      ActorCritic model = model_from_header(header, blob, 0);
      if (env->observation_size() != model.policy.obs_dim() ||
          env->action_size() != model.policy.action_dim()) {
        std::fprintf(stderr,
                     "eval: checkpoint expects %d-dim observations and %d-dim actions but "
                     "environment \"%s\" provides %d/%d\n",
                     model.policy.obs_dim(), model.policy.action_dim(), env_kind.c_str(),
                     env->observation_size(), env->action_size());
        return kExitValidation;
      }
      MlpTape tape;
      for (int e = 0; e < episodes; ++e) {
        Rng rng(stream_seed(seed, "eval", e));
        std::vector<double> obs = env->reset(rng);
        double ret = 0.0;
        std::int64_t len = 0;
        for (std::int64_t t = 0; t < 200000; ++t) {
          const auto& mu = forward(model.policy.mean, obs, tape);
          StepResult r = env->step(mu, rng);
          nlohmann::json rec = env->replay_record();
          rec["episode"] = e;
          rec["t"] = t;
          rec["time"] = static_cast<double>(t) * kEnvDt;
          rec["action"] = mu;
          rec["reward"] = r.reward;
          replay << rec.dump() << '\n';
          ret += r.reward;
          ++len;
          if (r.done) break;
          obs = std::move(r.observation);
        }
        returns.push_back(ret);
        lengths.push_back(len);
        ep_csv << e << ',' << len << ',' << csv_double(ret) << '\n';
      }
    } else {
      std::fprintf(stderr, "eval: unrecognized checkpoint kind \"%s\"\n", kind.c_str());
      return kExitValidation;
    }

    if (returns.empty()) {
      std::printf("episodes=0\n");
      return kExitOk;
    }
    double mean = std::accumulate(returns.begin(), returns.end(), 0.0) /
                  static_cast<double>(returns.size());
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    var /= static_cast<double>(returns.size());
    double mean_len = std::accumulate(lengths.begin(), lengths.end(), 0.0) /
                      static_cast<double>(lengths.size());
    std::printf("episodes=%zu mean_return=%.6g std_return=%.6g mean_length=%.6g\n", returns.size(),
                mean, std::sqrt(var), mean_len);
    return kExitOk;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "eval: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "eval: %s\n", e.what());
    return kExitRuntime;
  }
}

// ---------------------------------------------------------------------------
// checkgrad

namespace cli_detail {

inline RolloutBatch synthetic_batch(int n, const ActorCritic& model, const SymmetrySpec& ospec,
                                    const SymmetrySpec& aspec, Rng& rng) {
  RolloutBatch b;
  b.obs_dim = model.policy.obs_dim();
  b.act_dim = model.policy.action_dim();
  MlpTape tape;
  std::vector<double> obs(b.obs_dim);
  for (int i = 0; i < n; ++i) {
    for (auto& x : obs) x = 0.6 * rng.normal();
    PolicySample s = sample_action(model.policy, obs, rng, tape);
    b.observations.insert(b.observations.end(), obs.begin(), obs.end());
    b.actions.insert(b.actions.end(), s.action.begin(), s.action.end());
    b.old_logprobs.push_back(s.logprob + 0.1 * rng.normal());
    b.rewards.push_back(rng.normal());
    b.values.push_back(rng.normal());
    b.dones.push_back(0);
    b.advantages.push_back(rng.normal());
    b.returns.push_back(rng.normal());
  }
  if (ospec.size() > 0 && aspec.size() > 0) {
    b.mirrored_observations.resize(b.observations.size());
    b.mirrored_actions.resize(b.actions.size());
    for (int i = 0; i < n; ++i) {
      auto mo = apply_symmetry(ospec, b.obs_row(i));
      std::copy(mo.begin(), mo.end(),
                b.mirrored_observations.begin() + static_cast<std::size_t>(i) * b.obs_dim);
      auto ma = apply_symmetry(aspec, b.act_row(i));
      std::copy(ma.begin(), ma.end(),
                b.mirrored_actions.begin() + static_cast<std::size_t>(i) * b.act_dim);
    }
  }
  return b;
}

struct GradCheckRow {
  std::string term;
  CheckGradReport report;
  double tolerance = 1e-4;
  bool skipped = false;
};

// One finite-difference pass over a parameter slice of the combined loss.
// `lo..hi` selects the flattened coordinates being varied; everything else
// stays at the operating point.
inline GradCheckRow check_slice(const std::string& term, const RolloutBatch& batch,
                                const ActorCritic& ac, const LossWeights& w, std::size_t lo,
                                std::size_t hi, double tol, bool corrupt) {
  std::vector<int> idx(batch.size());
  std::iota(idx.begin(), idx.end(), 0);
  ActorCritic grad = ac.zeros_like();
  combined_loss(batch, idx, ac, w, &grad);
  auto full_grad = flatten_params(grad);
  auto full_params = flatten_params(ac);
  std::vector<double> slice_params(full_params.begin() + lo, full_params.begin() + hi);
  std::vector<double> slice_grad(full_grad.begin() + lo, full_grad.begin() + hi);
  if (corrupt && !slice_grad.empty()) slice_grad[0] += 1.0;

  ActorCritic scratch = ac;
  std::vector<double> probe = full_params;
  auto f = [&](std::span<const double> p) {
    std::copy(p.begin(), p.end(), probe.begin() + lo);
    unflatten_params(scratch, probe);
    KinkStats ks;
    LossBreakdown lb = combined_loss(batch, idx, scratch, w, nullptr, &ks);
    LossProbe out;
    out.value = lb.total;
    out.kinks = ks;
    return out;
  };
  GradCheckRow row;
  row.term = term;
  row.tolerance = tol;
  row.report = check_grad(f, slice_params, slice_grad, 1e-6, 400, 17);
  return row;
}

inline std::vector<GradCheckRow> checkgrad_level(const std::string& prefix, const TrainConfig& cfg,
                                                 int obs_dim, int act_dim,
                                                 const SymmetrySpec& ospec,
                                                 const SymmetrySpec& aspec, bool corrupt,
                                                 Rng& rng) {
  ActorCritic ac = ActorCritic::make(obs_dim, act_dim, cfg.nn_policy_arch, cfg.nn_value_arch);
  init_weights(ac, rng);
  RolloutBatch batch = synthetic_batch(16, ac, ospec, aspec, rng);
  const std::size_t n_mean = param_count(ac.policy.mean);
  const std::size_t n_logstd = ac.policy.log_std.size();
  const std::size_t n_total = param_count(ac);
  const std::size_t value_lo = n_mean + n_logstd;
  const double ent = cfg.entropy_coefficient > 0.0 ? cfg.entropy_coefficient : 0.01;
  const bool mirror = batch.has_mirror();
  const double wpi = cfg.psl_policy_weight > 0.0 ? cfg.psl_policy_weight : 0.005;
  const double wv = cfg.psl_value_weight > 0.0 ? cfg.psl_value_weight : 0.5;

  std::vector<GradCheckRow> rows;
  rows.push_back(check_slice(prefix + "policy_surrogate", batch, ac,
                             {cfg.clip_range, 0.0, 0.0, 0.0, 0.0}, 0, n_total, 1e-4, false));
  rows.push_back(check_slice(prefix + "value_loss", batch, ac,
                             {cfg.clip_range, 0.0, cfg.value_coefficient, 0.0, 0.0}, value_lo,
                             n_total, 1e-6, false));
  rows.push_back(check_slice(prefix + "entropy", batch, ac, {cfg.clip_range, ent, 0.0, 0.0, 0.0},
                             n_mean, n_mean + n_logstd, 1e-4, false));
  if (mirror) {
    rows.push_back(check_slice(prefix + "psl_policy", batch, ac,
                               {cfg.clip_range, 0.0, 0.0, wpi, 0.0}, 0, n_total, 1e-4, false));
    rows.push_back(check_slice(prefix + "psl_value", batch, ac, {cfg.clip_range, 0.0, 0.0, 0.0, wv},
                               value_lo, n_total, 1e-6, false));
  } else {
    GradCheckRow skip_pi, skip_v;
    skip_pi.term = prefix + "psl_policy";
    skip_pi.skipped = true;
    skip_v.term = prefix + "psl_value";
    skip_v.skipped = true;
    rows.push_back(skip_pi);
    rows.push_back(skip_v);
  }
  rows.push_back(check_slice(prefix + "combined", batch, ac,
                             {cfg.clip_range, cfg.entropy_coefficient, cfg.value_coefficient,
                              mirror ? cfg.psl_policy_weight : 0.0,
                              mirror ? cfg.psl_value_weight : 0.0},
                             0, n_total, 1e-4, corrupt));
  return rows;
}

}  // namespace cli_detail

inline int run_checkgrad(const std::string& config_path, bool corrupt) {
  using namespace cli_detail;
  try {
    nlohmann::json raw;
    try {
      raw = parse_json_file(config_path);
    } catch (const nlohmann::json::parse_error& e) {
      std::fprintf(stderr, "checkgrad: config parse error: %s\n", e.what());
      return kExitValidation;
    }
    std::vector<GradCheckRow> rows;
    if (raw.value("env", "") == "push_arena") {
      PushTrainConfig cfg = push_config_from_json(raw);
      Rng rng(stream_seed(cfg.seed, "checkgrad"));
      PushArena arena;
      auto ll = checkgrad_level("ll_", cfg.ll, PushArena::kLlObsSize, PushArena::kLlActSize,
                                arena.ll_observation_symmetry(), PushArena::ll_action_symmetry(),
                                corrupt, rng);
      auto hl = checkgrad_level("hl_", cfg.hl, RadarConfig{}.frame_size(), 1,
                                arena.hl_observation_symmetry(), PushArena::hl_action_symmetry(),
                                corrupt, rng);
      rows.insert(rows.end(), ll.begin(), ll.end());
      rows.insert(rows.end(), hl.begin(), hl.end());
    } else {
      TrainConfig cfg = train_config_from_json(raw);
      auto env = make_environment(cfg.env);
      Rng rng(stream_seed(cfg.seed, "checkgrad"));
      rows = checkgrad_level("", cfg, env->observation_size(), env->action_size(),
                             env->observation_symmetry(), env->action_symmetry(), corrupt, rng);
    }
    bool ok = true;
    for (const auto& row : rows) {
      if (row.skipped) {
        std::printf("%-22s skipped (environment declares no mirror)\n", row.term.c_str());
        continue;
      }
      bool pass = row.report.max_rel_err < row.tolerance && row.report.checked > 0;
      ok = ok && pass;
      std::printf("%-22s checked=%-4d skipped_near_kink=%-4d max_rel_err=%.3e tol=%.0e %s\n",
                  row.term.c_str(), row.report.checked, row.report.skipped_near_kink,
                  row.report.max_rel_err, row.tolerance, pass ? "PASS" : "FAIL");
    }
    return ok ? kExitOk : kExitFail;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "checkgrad: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "checkgrad: %s\n", e.what());
    return kExitRuntime;
  }
}

// ---------------------------------------------------------------------------
// export

inline int run_export(const std::string& run_dir, const std::string& what) {
  namespace fs = std::filesystem;
  using namespace cli_detail;
  try {
    const fs::path run(run_dir);
    if (what == "curves") {
      std::vector<std::pair<std::string, fs::path>> sources;
      if (fs::exists(run / "metrics.csv")) sources.emplace_back("train", run / "metrics.csv");
      if (fs::exists(run / "metrics_ll.csv")) sources.emplace_back("ll", run / "metrics_ll.csv");
      if (fs::exists(run / "metrics_hl.csv")) sources.emplace_back("hl", run / "metrics_hl.csv");
      if (sources.empty()) {
        std::fprintf(stderr, "export: no metrics files in %s\n", run_dir.c_str());
        return kExitValidation;
      }
      std::ofstream os(run / "curves.csv", std::ios::trunc);
      os << "stream,update_index,env_steps,metric,value\n";
      std::int64_t emitted = 0;
      for (const auto& [stream, path] : sources) {
        std::ifstream is(path);
        std::string line;
        std::getline(is, line);  // header
        std::vector<std::string> cols;
        {
          std::stringstream ss(line);
          std::string c;
          while (std::getline(ss, c, ',')) cols.push_back(c);
        }
        while (std::getline(is, line)) {
          if (line.empty()) continue;
          std::vector<std::string> f;
          std::stringstream ss(line);
          std::string c;
          while (std::getline(ss, c, ',')) f.push_back(c);
          if (f.size() != cols.size()) continue;
          for (std::size_t k = 2; k < cols.size(); ++k) {
            os << stream << ',' << f[0] << ',' << f[1] << ',' << cols[k] << ',' << f[k] << '\n';
            ++emitted;
          }
        }
      }
      std::printf("curves.csv: %lld rows\n", static_cast<long long>(emitted));
      return kExitOk;
    }
    if (what == "heatmap") {
      const fs::path replay = run / "replay.jsonl";
      if (!fs::exists(replay)) {
        std::fprintf(stderr, "export: %s has no replay.jsonl (run eval first)\n", run_dir.c_str());
        return kExitValidation;
      }
      std::ifstream is(replay);
      std::string line;
      std::map<std::int64_t, std::pair<double, double>> final_ball;
      bool any_ball = false;
      while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json rec = nlohmann::json::parse(line);
        if (!rec.contains("ball")) continue;
        any_ball = true;
        final_ball[rec.at("episode").get<std::int64_t>()] = {rec["ball"][0].get<double>(),
                                                             rec["ball"][1].get<double>()};
      }
      if (!any_ball) {
        std::fprintf(stderr, "export: replay has no ball positions; heatmap needs a ball task\n");
        return kExitValidation;
      }
      const double bin = 0.5;
      std::map<std::pair<long, long>, std::int64_t> counts;
      for (const auto& [ep, p] : final_ball) {
        long ix = static_cast<long>(std::floor(p.first / bin));
        long iy = static_cast<long>(std::floor(p.second / bin));
        counts[{ix, iy}] += 1;
      }
      std::ofstream os(run / "heatmap.csv", std::ios::trunc);
      os << "x,y,count\n";
      std::int64_t total = 0;
      for (const auto& [cell, n] : counts) {
        os << csv_double((cell.first + 0.5) * bin) << ',' << csv_double((cell.second + 0.5) * bin)
           << ',' << n << '\n';
        total += n;
      }
      std::printf("heatmap.csv: %lld episodes across %zu cells\n", static_cast<long long>(total),
                  counts.size());
      return kExitOk;
    }
    std::fprintf(stderr, "export: unknown target \"%s\" (expected curves or heatmap)\n",
                 what.c_str());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "export: %s\n", e.what());
    return kExitRuntime;
  }
}

}  // namespace symrl
