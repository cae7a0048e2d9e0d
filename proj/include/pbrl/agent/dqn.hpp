#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "pbrl/data/replay.hpp"
#include "pbrl/diff/nn.hpp"
#include "pbrl/diff/optim.hpp"

PBRL_NAMESPACE_BEGIN
namespace agent {

struct DqnConfig {
  int hidden = 64;
  int hidden_layers = 2;
  Real gamma = Real(0.99);
  Real lr = Real(5e-4);
  int batch = 64;
  int target_sync = 1000;
  Real epsilon_start = 1;
  Real epsilon_end = Real(0.05);
  int epsilon_decay_steps = 50000;
  Real max_grad_norm = 10;
};

enum class ActMode { explore, greedy };

/// Double-Q learner over a discrete action set with an online and a target network.
class DqnAgent {
 public:
  DqnAgent() = default;
  DqnAgent(int obs_dim, int actions, DqnConfig config, std::uint64_t seed);

  int actions() const { return actions_; }
  const DqnConfig& config() const { return config_; }

  std::vector<Real> q_values(const envs::Observation& obs) const;
  /// Linear anneal from epsilon_start to epsilon_end over epsilon_decay_steps.
  Real epsilon_at(std::int64_t step) const;
  /// greedy: argmax Q with ties to the lowest index; explore: epsilon-greedy.
  int act(const envs::Observation& obs, ActMode mode, Real epsilon, std::mt19937_64& rng) const;

  /// Mean squared TD error against r + gamma (1 - done) Q_target(s', argmax_a Q(s', a)),
  /// with r the stored reward_label.
  diff::Var td_loss(diff::Tape& tape, std::span<const data::Transition* const> batch) const;
  /// One Adam step on td_loss; syncs the target every target_sync updates.
  Real update(std::span<const data::Transition* const> batch);
  void sync_target();

  diff::ParameterList parameters();
  diff::ConstParameterList parameters() const;
  diff::ConstParameterList target_parameters() const;
  std::int64_t updates() const { return updates_; }

 private:
  int actions_ = 0;
  DqnConfig config_;
  diff::Mlp online_;
  diff::Mlp target_;
  diff::Adam opt_;
  std::int64_t updates_ = 0;
};

/// Greedy action index from a Q vector, lowest index on ties.
int greedy_action(std::span<const Real> q);

/// Visitation counts keyed by an environment's state_key.
class VisitCounts {
 public:
  void add(std::uint64_t key) { ++counts_[key]; }
  std::int64_t count(std::uint64_t key) const;

 private:
  std::unordered_map<std::uint64_t, std::int64_t> counts_;
};

/// 1 / sqrt(1 + count(key)).
Real intrinsic_pretrain_reward(const VisitCounts& counts, std::uint64_t key);

}  // namespace agent
PBRL_NAMESPACE_END
