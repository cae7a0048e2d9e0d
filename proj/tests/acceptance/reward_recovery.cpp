#include <fmt/format.h>

#include "acceptance.hpp"
#include "pbrl/data/replay.hpp"
#include "pbrl/diff/optim.hpp"
#include "pbrl/envs/pointmass.hpp"
#include "pbrl/oracle/oracle.hpp"
#include "pbrl/reward/reward_model.hpp"

using namespace pbrl;

namespace {

constexpr int kTrain = 500;
constexpr int kHeldOut = 200;
constexpr int kSteps = 400;

// Teacher: a randomly initialised network of the learner's own class, seeded
// independently, so the target is realisable but unknown to the learner.
double recovery_accuracy(std::uint64_t seed) {
  envs::PointMass env;
  const reward::RewardNetConfig net{.state_dim = env.spec().obs_dim, .action_dim = 2};
  const reward::RewardMember teacher(net, seed * 7919 + 1, "teacher");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> u(-env.config().max_action, env.config().max_action);
  data::ReplayBuffer buffer(20000);
  auto state = env.reset(rng);
  std::int64_t episode = 0;
  for (int i = 0; i < 20000; ++i) {
    const envs::Action a{u(rng), u(rng)};
    const auto res = env.step(a);
    data::Transition t;
    t.state = state.observation;
    t.action = a;
    t.next_state = res.state.observation;
    t.target_reward = teacher.evaluate(t.state, a);
    t.done = res.terminal;
    t.episode = episode;
    t.step_index = state.step_index;
    buffer.add(std::move(t));
    if (res.state.done) {
      state = env.reset(rng);
      ++episode;
    } else {
      state = res.state;
    }
  }

  const auto pairs = data::sample_candidate_pairs(buffer, kTrain + kHeldOut, 50, seed + 11);
  std::vector<data::PreferenceTriplet> train, held_out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    data::PreferenceTriplet t{pairs[i].first, pairs[i].second,
                              oracle::perfect_label(pairs[i].first, pairs[i].second, Real(1e-6)), "perfect"};
    (i < kTrain ? train : held_out).push_back(std::move(t));
  }

  reward::RewardMember learner(net, seed + 101);
  diff::Adam opt(learner.parameters(), diff::AdamConfig{.lr = Real(3e-4)});
  std::mt19937_64 batch_rng(seed + 202);
  std::uniform_int_distribution<int> pick(0, kTrain - 1);
  for (int s = 0; s < kSteps; ++s) {
    std::vector<const data::PreferenceTriplet*> batch;
    for (int k = 0; k < 32; ++k) batch.push_back(&train[static_cast<std::size_t>(pick(batch_rng))]);
    diff::train_step(learner.parameters(), opt, [&](diff::Tape& t) { return reward::ce_loss(t, learner, batch); });
  }

  int correct = 0, scored = 0;
  for (const auto& t : held_out) {
    if (t.label.is_neutral()) continue;
    const Real ga = reward::predicted_return(learner, t.seg_a), gb = reward::predicted_return(learner, t.seg_b);
    correct += (ga > gb) == (t.label.a > t.label.b) ? 1 : 0;
    ++scored;
  }
  return scored == 0 ? 0.0 : static_cast<double>(correct) / scored;
}

}  // namespace

Outcome reward_recovery() {
  bool ok = true;
  std::string detail = "held-out order accuracy";
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const double acc = recovery_accuracy(seed);
    ok = ok && acc >= 0.95;
    detail += fmt::format(" seed{} {:.3f}", seed, acc);
  }
  return {ok, detail + " (need >= 0.95 each)"};
}
