#pragma once

#include <random>

#include "pbrl/data/replay.hpp"
#include "pbrl/reward/reward_model.hpp"

namespace test_helpers {

using namespace pbrl;

inline data::Segment random_segment(std::mt19937_64& rng, int length, int state_dim, int action_dim) {
  std::normal_distribution<double> n(0, 1);
  data::Segment s;
  for (int t = 0; t < length; ++t) {
    envs::Observation o(static_cast<std::size_t>(state_dim));
    envs::Action a(static_cast<std::size_t>(action_dim));
    for (auto& v : o) v = static_cast<Real>(n(rng));
    for (auto& v : a) v = static_cast<Real>(n(rng));
    s.states.push_back(o);
    s.actions.push_back(a);
    s.target_rewards.push_back(static_cast<Real>(n(rng)));
  }
  return s;
}

/// Sets every weight to zero and the head bias to atanh(value), so the member
/// outputs `value` everywhere.
inline void make_constant(reward::RewardMember& m, Real value) {
  for (auto* p : m.parameters()) std::fill(p->value.data.begin(), p->value.data.end(), Real(0));
  for (auto* p : m.parameters()) {
    if (p->name.find(".head.bias") != std::string::npos) p->value.data[0] = std::atanh(value);
  }
}

/// One episode of `length` steps with distinct one-hot-ish states.
inline void add_episode(data::ReplayBuffer& buf, std::int64_t episode, int length, int dim = 3) {
  for (int t = 0; t < length; ++t) {
    data::Transition tr;
    tr.state = envs::Observation(static_cast<std::size_t>(dim), Real(t));
    tr.next_state = envs::Observation(static_cast<std::size_t>(dim), Real(t + 1));
    tr.state[0] = static_cast<Real>(episode);
    tr.action = {1, 0};
    tr.target_reward = static_cast<Real>(t);
    tr.episode = episode;
    tr.step_index = t;
    buf.add(tr);
  }
}

}  // namespace test_helpers
