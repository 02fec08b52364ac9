#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace symrl {

// A signed feature permutation: out[i] = multipliers[i] * v[indices[i]].
// Every spec used here is an involution (applying it twice is the identity),
// which validate_spec enforces.
struct SymmetrySpec {
  std::vector<int> indices;
  std::vector<double> multipliers;

  std::size_t size() const { return indices.size(); }

  static SymmetrySpec identity(int n) {
    SymmetrySpec s;
    s.indices.resize(n);
    s.multipliers.assign(n, 1.0);
    for (int i = 0; i < n; ++i) s.indices[i] = i;
    return s;
  }
};

inline std::vector<double> apply_symmetry(const SymmetrySpec& spec,
                                          std::span<const double> v) {
  if (spec.indices.size() != spec.multipliers.size())
    throw std::invalid_argument("apply_symmetry: indices/multipliers size mismatch");
  if (v.size() != spec.indices.size())
    throw std::invalid_argument("apply_symmetry: vector dimension " +
                                std::to_string(v.size()) + " does not match spec size " +
                                std::to_string(spec.indices.size()));
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    int j = spec.indices[i];
    if (j < 0 || static_cast<std::size_t>(j) >= v.size())
      throw std::invalid_argument("apply_symmetry: index out of range");
    out[i] = spec.multipliers[i] * v[j];
  }
  return out;
}

struct SpecValidation {
  bool bijection_ok = true;
  bool involution_ok = true;
  bool multipliers_ok = true;
  std::vector<int> offenders;
  bool ok() const { return bijection_ok && involution_ok && multipliers_ok; }
};

inline SpecValidation validate_spec(const SymmetrySpec& spec) {
  SpecValidation r;
  const int n = static_cast<int>(spec.indices.size());
  if (spec.multipliers.size() != spec.indices.size()) {
    r.bijection_ok = false;
    return r;
  }
  std::vector<int> seen(n, 0);
  for (int i = 0; i < n; ++i) {
    int j = spec.indices[i];
    if (j < 0 || j >= n) {
      r.bijection_ok = false;
      r.offenders.push_back(i);
      continue;
    }
    if (++seen[j] > 1) {
      r.bijection_ok = false;
      r.offenders.push_back(i);
    }
  }
  if (!r.bijection_ok) return r;
  for (int i = 0; i < n; ++i) {
    if (spec.indices[spec.indices[i]] != i) {
      r.involution_ok = false;
      r.offenders.push_back(i);
    }
    double m = spec.multipliers[i];
    if (m != 1.0 && m != -1.0) {
      r.multipliers_ok = false;
      r.offenders.push_back(i);
    } else if (spec.multipliers[i] * spec.multipliers[spec.indices[i]] != 1.0) {
      r.involution_ok = false;
      r.offenders.push_back(i);
    }
  }
  std::sort(r.offenders.begin(), r.offenders.end());
  r.offenders.erase(std::unique(r.offenders.begin(), r.offenders.end()), r.offenders.end());
  return r;
}

// Finite MDP with dense transition tensor, row-major [s][a][s'].
struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> transition;
  std::vector<double> reward;

  double p(int s, int a, int s2) const {
    return transition[(static_cast<std::size_t>(s) * num_actions + a) * num_states + s2];
  }
  double& p(int s, int a, int s2) {
    return transition[(static_cast<std::size_t>(s) * num_actions + a) * num_states + s2];
  }
  double r(int s, int a) const { return reward[static_cast<std::size_t>(s) * num_actions + a]; }
  double& r(int s, int a) { return reward[static_cast<std::size_t>(s) * num_actions + a]; }

  void check() const {
    if (num_states <= 0 || num_actions <= 0)
      throw std::invalid_argument("TabularMdp: empty state or action set");
    if (transition.size() != static_cast<std::size_t>(num_states) * num_actions * num_states)
      throw std::invalid_argument("TabularMdp: transition tensor size mismatch");
    if (reward.size() != static_cast<std::size_t>(num_states) * num_actions)
      throw std::invalid_argument("TabularMdp: reward table size mismatch");
    for (int s = 0; s < num_states; ++s)
      for (int a = 0; a < num_actions; ++a) {
        double sum = 0.0;
        for (int s2 = 0; s2 < num_states; ++s2) {
          double v = p(s, a, s2);
          if (v < 0.0) throw std::invalid_argument("TabularMdp: negative transition probability");
          sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-12)
          throw std::invalid_argument("TabularMdp: transition row does not sum to 1");
      }
  }
};

struct HomomorphismReport {
  double max_transition_gap = 0.0;
  double max_reward_gap = 0.0;
  double tolerance = 1e-12;
  bool ok() const { return max_transition_gap <= tolerance && max_reward_gap <= tolerance; }
};

// Checks p(f(s), g_s(a), f(s')) == p(s, a, s') and r(f(s), g_s(a)) == r(s, a).
// f maps states, g[s] maps actions at state s; both must be in-range bijections.
inline HomomorphismReport check_homomorphism(const TabularMdp& mdp,
                                             const std::vector<int>& f,
                                             const std::vector<std::vector<int>>& g) {
  mdp.check();
  if (f.size() != static_cast<std::size_t>(mdp.num_states))
    throw std::domain_error("check_homomorphism: state map size mismatch");
  if (g.size() != static_cast<std::size_t>(mdp.num_states))
    throw std::domain_error("check_homomorphism: action map must be given per state");
  std::vector<int> seen(mdp.num_states, 0);
  for (int s = 0; s < mdp.num_states; ++s) {
    if (f[s] < 0 || f[s] >= mdp.num_states)
      throw std::domain_error("check_homomorphism: state map out of range");
    if (++seen[f[s]] > 1) throw std::domain_error("check_homomorphism: state map not a bijection");
    if (g[s].size() != static_cast<std::size_t>(mdp.num_actions))
      throw std::domain_error("check_homomorphism: action map size mismatch");
    std::vector<int> aseen(mdp.num_actions, 0);
    for (int a = 0; a < mdp.num_actions; ++a) {
      if (g[s][a] < 0 || g[s][a] >= mdp.num_actions)
        throw std::domain_error("check_homomorphism: action map out of range");
      if (++aseen[g[s][a]] > 1)
        throw std::domain_error("check_homomorphism: action map not a bijection");
    }
  }
  HomomorphismReport rep;
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a) {
      rep.max_reward_gap = std::max(rep.max_reward_gap,
                                    std::abs(mdp.r(f[s], g[s][a]) - mdp.r(s, a)));
      for (int s2 = 0; s2 < mdp.num_states; ++s2)
        rep.max_transition_gap = std::max(
            rep.max_transition_gap, std::abs(mdp.p(f[s], g[s][a], f[s2]) - mdp.p(s, a, s2)));
    }
  return rep;
}

// Value iteration to residual <= tol, then the largest |V(s) - V(f(s))|.
// For a valid homomorphism this gap is bounded by the iteration tolerance.
inline double value_symmetry_oracle(const TabularMdp& mdp, const std::vector<int>& f,
                                    double gamma, double tol = 1e-10,
                                    std::int64_t max_sweeps = 1000000) {
  mdp.check();
  if (f.size() != static_cast<std::size_t>(mdp.num_states))
    throw std::domain_error("value_symmetry_oracle: state map size mismatch");
  if (gamma < 0.0 || gamma >= 1.0)
    throw std::domain_error("value_symmetry_oracle: gamma must lie in [0, 1)");
  std::vector<double> v(mdp.num_states, 0.0), v_next(mdp.num_states, 0.0);
  double residual = std::numeric_limits<double>::infinity();
  for (std::int64_t sweep = 0; sweep < max_sweeps && residual > tol; ++sweep) {
    residual = 0.0;
    for (int s = 0; s < mdp.num_states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < mdp.num_actions; ++a) {
        double q = mdp.r(s, a);
        for (int s2 = 0; s2 < mdp.num_states; ++s2) q += gamma * mdp.p(s, a, s2) * v[s2];
        best = std::max(best, q);
      }
      v_next[s] = best;
      residual = std::max(residual, std::abs(best - v[s]));
    }
    v.swap(v_next);
  }
  if (residual > tol)
    throw std::runtime_error("value_symmetry_oracle: value iteration did not converge");
  double gap = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) gap = std::max(gap, std::abs(v[s] - v[f[s]]));
  return gap;
}

// Observation vectors are concatenations of named feature blocks; each block
// carries its own reflection spec and the full-vector spec is assembled with
// block offsets, in declaration order.
struct SymmetryBlock {
  std::string name;
  SymmetrySpec spec;
};

struct SymmetryManifest {
  std::vector<SymmetryBlock> blocks;

  int total_size() const {
    int n = 0;
    for (const auto& b : blocks) n += static_cast<int>(b.spec.size());
    return n;
  }

  int offset_of(const std::string& name) const {
    int off = 0;
    for (const auto& b : blocks) {
      if (b.name == name) return off;
      off += static_cast<int>(b.spec.size());
    }
    throw std::out_of_range("SymmetryManifest: no block named " + name);
  }

  SymmetrySpec concat() const {
    SymmetrySpec full;
    int off = 0;
    for (const auto& b : blocks) {
      for (std::size_t i = 0; i < b.spec.size(); ++i) {
        full.indices.push_back(b.spec.indices[i] + off);
        full.multipliers.push_back(b.spec.multipliers[i]);
      }
      off += static_cast<int>(b.spec.size());
    }
    return full;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["blocks"] = nlohmann::json::array();
    for (const auto& b : blocks) {
      nlohmann::json jb;
      jb["name"] = b.name;
      jb["size"] = b.spec.size();
      jb["indices"] = b.spec.indices;
      jb["multipliers"] = b.spec.multipliers;
      j["blocks"].push_back(jb);
    }
    return j;
  }

  static SymmetryManifest from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("blocks") || !j["blocks"].is_array())
      throw std::invalid_argument("SymmetryManifest: expected {\"blocks\": [...]}");
    SymmetryManifest m;
    for (const auto& jb : j["blocks"]) {
      for (const auto& [key, val] : jb.items()) {
        (void)val;
        if (key != "name" && key != "size" && key != "indices" && key != "multipliers")
          throw std::invalid_argument("SymmetryManifest: unknown block key '" + key + "'");
      }
      SymmetryBlock b;
      b.name = jb.at("name").get<std::string>();
      b.spec.indices = jb.at("indices").get<std::vector<int>>();
      b.spec.multipliers = jb.at("multipliers").get<std::vector<double>>();
      auto size = jb.at("size").get<std::size_t>();
      if (size != b.spec.indices.size() || size != b.spec.multipliers.size())
        throw std::invalid_argument("SymmetryManifest: declared size does not match arrays in block '" +
                                    b.name + "'");
      auto v = validate_spec(b.spec);
      if (!v.ok())
        throw std::invalid_argument("SymmetryManifest: block '" + b.name +
                                    "' is not a signed involution");
      m.blocks.push_back(std::move(b));
    }
    return m;
  }
};

}  // namespace symrl
