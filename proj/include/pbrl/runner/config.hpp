#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "pbrl/agent/dqn.hpp"
#include "pbrl/worldmodel/world_model.hpp"

PBRL_NAMESPACE_BEGIN
namespace runner {

/// Everything a run needs. JSON keys match the field names; unknown keys are
/// a ConfigError so typos do not silently fall back to defaults.
struct RunConfig {
  std::string env = "keydoor";
  nlohmann::json env_config = nlohmann::json::object();
  /// prior|rvar|nrp|bisim|none|prior-only, or "reference" for the agent on the
  /// environment reward (normalisation denominator).
  std::string method = "prior";
  std::string oracle = "perfect";
  std::uint64_t seed = 12345;

  int segment_length = 50;         // l
  int queries_per_session = 10;    // M
  int session_interval = 5000;     // K
  int world_model_interval = 2000; // j
  int feedback_budget = 200;
  int ensemble_size = 3;           // E
  /// Overrides the per-environment default when set.
  std::optional<double> lambda;

  std::int64_t total_steps = 200000;
  int random_steps = 1000;
  int intrinsic_steps = 9000;
  int eval_interval = 1000;
  int eval_episodes = 10;
  /// Candidate pairs sampled per session, as a multiple of the queries asked.
  int candidate_multiplier = 10;

  int reward_hidden = 256;
  int reward_hidden_layers = 3;
  double reward_lr = 3e-4;
  int reward_batch = 32;
  /// Adam steps per member per session.
  int reward_steps = 200;
  int bisim_pairs = 256;
  double equal_threshold = 0;
  bool fixed_fraction_mistakes = false;
  int buffer_capacity = 100000;

  agent::DqnConfig dqn;
  worldmodel::WorldModelConfig world_model;

  bool save_checkpoints = true;
  bool dump_attention = true;
  /// Human oracle: how long a session waits for labels before proceeding.
  double human_wait_seconds = 0;

  std::int64_t pretrain_steps() const { return static_cast<std::int64_t>(random_steps) + intrinsic_steps; }
  bool is_reference() const { return method == "reference"; }

  /// ConfigError on any violated invariant.
  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  /// Overlays the keys present in j onto this config.
  void merge(const nlohmann::json& j);
};

/// The five-seed suite used for multi-seed experiments.
inline constexpr std::uint64_t kSeedSuite[5] = {12345, 23456, 34567, 45678, 56789};

}  // namespace runner
PBRL_NAMESPACE_END
