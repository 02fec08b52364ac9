#pragma once

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include <symrl/common.hpp>
#include <symrl/symmetry.hpp>

namespace symrl {

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool done = false;
};

// Contract every trainable environment satisfies. Dynamics draw randomness
// only from the Rng handed in, so a seed fixes the whole trajectory.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual int observation_size() const = 0;
  virtual int action_size() const = 0;

  virtual std::vector<double> reset(Rng& rng) = 0;
  virtual StepResult step(std::span<const double> action, Rng& rng) = 0;

  // Sagittal mirror maps over observation and action vectors. Empty specs
  // mean the environment declares no mirror structure (the symmetry losses
  // must then be disabled).
  virtual SymmetrySpec observation_symmetry() const { return {}; }
  virtual SymmetrySpec action_symmetry() const { return {}; }

  // Full dynamic state, sufficient to resume mid-episode bit-exactly.
  virtual nlohmann::json save_state() const = 0;
  virtual void load_state(const nlohmann::json& j) = 0;

  // Mirror the whole world across the agent's sagittal plane (y -> -y).
  // Diagnostics use this to check observation and reward equivariance.
  virtual void reflect_world() { throw std::logic_error("reflect_world: not supported"); }

  // The observation for the current state, identical to what reset/step
  // returned last. Lets diagnostics re-observe after reflect_world.
  virtual std::vector<double> current_observation() const {
    throw std::logic_error("current_observation: not supported");
  }

  // One row of an episode replay: world positions for rendering or export.
  virtual nlohmann::json replay_record() const { return nlohmann::json::object(); }
};

using EnvFactory = std::function<std::unique_ptr<Environment>(int env_index)>;

}  // namespace symrl
