#include "pbrl/agent/dqn.hpp"

#include <algorithm>
#include <cmath>

PBRL_NAMESPACE_BEGIN
namespace agent {

namespace {

std::vector<int> layer_sizes(int in, int hidden, int layers, int out) {
  std::vector<int> sizes{in};
  for (int i = 0; i < layers; ++i) sizes.push_back(hidden);
  sizes.push_back(out);
  return sizes;
}

diff::Tensor stack(std::span<const data::Transition* const> batch, bool next) {
  const auto dim = (next ? batch.front()->next_state : batch.front()->state).size();
  std::vector<Real> flat;
  flat.reserve(batch.size() * dim);
  for (const auto* t : batch) {
    const auto& o = next ? t->next_state : t->state;
    if (o.size() != dim) throw ShapeError("agent batch has ragged observations");
    flat.insert(flat.end(), o.begin(), o.end());
  }
  return diff::Tensor({static_cast<int>(batch.size()), static_cast<int>(dim)}, std::move(flat));
}

}  // namespace

int greedy_action(std::span<const Real> q) {
  if (q.empty()) throw ActionError("no action values");
  return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

DqnAgent::DqnAgent(int obs_dim, int actions, DqnConfig config, std::uint64_t seed) : actions_(actions), config_(config) {
  if (actions < 1 || obs_dim < 1) throw ConfigError("agent needs at least one action and a non-empty observation");
  if (!(config.gamma > 0 && config.gamma <= 1)) throw ConfigError("agent gamma must lie in (0, 1]");
  if (!(config.epsilon_start >= 0 && config.epsilon_start <= 1 && config.epsilon_end >= 0 && config.epsilon_end <= 1)) {
    throw ConfigError("agent epsilon must lie in [0, 1]");
  }
  std::mt19937_64 rng(seed);
  online_ = diff::Mlp("q", layer_sizes(obs_dim, config.hidden, config.hidden_layers, actions), diff::Activation::silu,
                      diff::Activation::none, rng);
  target_ = online_;
  opt_ = diff::Adam(parameters(), diff::AdamConfig{.lr = config.lr, .max_grad_norm = config.max_grad_norm});
}

std::vector<Real> DqnAgent::q_values(const envs::Observation& obs) const {
  const auto q = online_.infer(diff::Tensor::row(obs));
  return {q.data.begin(), q.data.end()};
}

Real DqnAgent::epsilon_at(std::int64_t step) const {
  if (config_.epsilon_decay_steps <= 0 || step >= config_.epsilon_decay_steps) return config_.epsilon_end;
  const Real frac = static_cast<Real>(step) / static_cast<Real>(config_.epsilon_decay_steps);
  return config_.epsilon_start + frac * (config_.epsilon_end - config_.epsilon_start);
}

int DqnAgent::act(const envs::Observation& obs, ActMode mode, Real epsilon, std::mt19937_64& rng) const {
  if (mode == ActMode::explore) {
    // The coin is always drawn so the stream does not depend on Q values.
    const bool random = std::uniform_real_distribution<double>(0, 1)(rng) < epsilon;
    const int pick = std::uniform_int_distribution<int>(0, actions_ - 1)(rng);
    if (random) return pick;
  }
  return greedy_action(q_values(obs));
}

diff::Var DqnAgent::td_loss(diff::Tape& tape, std::span<const data::Transition* const> batch) const {
  if (batch.empty()) throw DataError("td_loss on an empty batch");
  const int n = static_cast<int>(batch.size());
  const diff::Tensor next = stack(batch, true);
  const diff::Tensor q_next_online = online_.infer(next);
  const diff::Tensor q_next_target = target_.infer(next);
  diff::Tensor mask = diff::Tensor::zeros({n, actions_});
  diff::Tensor y = diff::Tensor::zeros({n, 1});
  for (int i = 0; i < n; ++i) {
    const auto* t = batch[static_cast<std::size_t>(i)];
    if (t->action_id < 0 || t->action_id >= actions_) throw ActionError("stored action id out of range");
    mask.at(i, t->action_id) = 1;
    Real bootstrap = 0;
    if (!t->done) {
      const std::span<const Real> row(q_next_online.data.data() + static_cast<std::size_t>(i) * actions_,
                                      static_cast<std::size_t>(actions_));
      bootstrap = q_next_target.at(i, greedy_action(row));
    }
    y.at(i, 0) = t->reward_label + config_.gamma * bootstrap;
  }
  diff::Var q = online_.forward(tape, tape.constant(stack(batch, false), "states"));
  diff::Var q_sa = diff::row_sum(diff::mul(q, tape.constant(std::move(mask), "action_mask")));
  return diff::mean(diff::square(diff::sub(q_sa, tape.constant(std::move(y), "td_target"))));
}

Real DqnAgent::update(std::span<const data::Transition* const> batch) {
  const Real loss = diff::train_step(parameters(), opt_, [&](diff::Tape& t) { return td_loss(t, batch); });
  ++updates_;
  if (config_.target_sync > 0 && updates_ % config_.target_sync == 0) sync_target();
  return loss;
}

void DqnAgent::sync_target() { target_ = online_; }

diff::ParameterList DqnAgent::parameters() {
  diff::ParameterList out;
  online_.collect(out);
  return out;
}

diff::ConstParameterList DqnAgent::parameters() const {
  diff::ConstParameterList out;
  online_.collect(out);
  return out;
}

diff::ConstParameterList DqnAgent::target_parameters() const {
  diff::ConstParameterList out;
  target_.collect(out);
  return out;
}

std::int64_t VisitCounts::count(std::uint64_t key) const {
  auto it = counts_.find(key);
  return it == counts_.end() ? 0 : it->second;
}

Real intrinsic_pretrain_reward(const VisitCounts& counts, std::uint64_t key) {
  return Real(1) / std::sqrt(Real(1) + static_cast<Real>(counts.count(key)));
}

}  // namespace agent
PBRL_NAMESPACE_END
