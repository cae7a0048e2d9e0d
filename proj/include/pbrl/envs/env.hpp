#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "pbrl/core/config.hpp"
#include "pbrl/core/errors.hpp"

PBRL_NAMESPACE_BEGIN
namespace envs {

using Observation = std::vector<Real>;
/// Discrete actions are one-hot vectors of length n; continuous actions are
/// the raw control vector.
using Action = std::vector<Real>;

struct DiscreteSpace {
  int n = 0;
};
struct ContinuousSpace {
  int dim = 0;
  Real low = 0;
  Real high = 0;
};
using ActionSpace = std::variant<DiscreteSpace, ContinuousSpace>;

int action_dim(const ActionSpace& space);
bool is_discrete(const ActionSpace& space);
Action one_hot_action(int index, int n);
/// Index of the hot entry of a one-hot action; ActionError if not one-hot.
int action_index(const Action& action);

struct EnvSpec {
  std::string name;
  int obs_dim = 0;
  ActionSpace action_space;
  int horizon = 0;
};

struct EnvState {
  Observation observation;
  bool done = false;
  int step_index = 0;
};

struct StepResult {
  EnvState state;
  Real target_reward = 0;
  /// Episode ended by reaching the goal (as opposed to the horizon).
  bool terminal = false;
  bool success = false;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual EnvState reset(std::mt19937_64& rng) = 0;
  /// ActionError for an action outside the action space, EpisodeError when the
  /// episode is already over.
  virtual StepResult step(const Action& action) = 0;
  virtual EnvState state() const = 0;
  /// Serializable description of the current state.
  virtual nlohmann::json render() const = 0;
  /// Restores the state described by a render() frame.
  virtual void restore(const nlohmann::json& frame) = 0;
  virtual Real target_reward(const Observation& s, const Action& a, const Observation& next) const = 0;
  /// Hash of a discretised observation, used for visitation counts.
  virtual std::uint64_t state_key(const Observation& obs) const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

/// Builds "keydoor" or "pointmass" from its JSON layout config (may be empty).
std::unique_ptr<Environment> make_environment(const std::string& name, const nlohmann::json& config = {});

}  // namespace envs
PBRL_NAMESPACE_END
