#include <doctest.h>

#include "pbrl/agent/dqn.hpp"
#include "pbrl/credit/credit.hpp"
#include "pbrl/diff/optim.hpp"

using namespace pbrl;

namespace {

data::Segment segment(std::mt19937_64& rng, int length) {
  std::normal_distribution<double> n(0, 1);
  data::Segment s;
  for (int t = 0; t < length; ++t) {
    s.states.push_back({static_cast<Real>(n(rng)), static_cast<Real>(n(rng)), static_cast<Real>(n(rng))});
    s.actions.push_back({static_cast<Real>(n(rng)), static_cast<Real>(n(rng))});
    s.target_rewards.push_back(0);
  }
  return s;
}

std::vector<data::PreferenceTriplet> batch(std::mt19937_64& rng, int n, int length) {
  std::vector<data::PreferenceTriplet> out;
  const data::PreferenceLabel labels[] = {data::PreferenceLabel::prefer_a(), data::PreferenceLabel::prefer_b(),
                                          data::PreferenceLabel::equal()};
  for (int i = 0; i < n; ++i) out.push_back({segment(rng, length), segment(rng, length), labels[i % 3]});
  return out;
}

reward::RewardNetConfig small_net() { return {.state_dim = 3, .action_dim = 2, .hidden = 6, .hidden_layers = 2}; }

}  // namespace

TEST_CASE("cross-entropy gradients") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    reward::RewardMember m(small_net(), seed);
    auto b = batch(rng, 3, 4);
    std::vector<const data::PreferenceTriplet*> ptrs{&b[0], &b[1], &b[2]};
    auto report = diff::grad_check(m.parameters(), [&](diff::Tape& t) { return reward::ce_loss(t, m, ptrs); }, 1e-4);
    CHECK_MESSAGE(report.passed(), report.summary());
  }
}

TEST_CASE("prior loss gradients against fixed targets") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    reward::RewardMember m(small_net(), seed);
    auto s = segment(rng, 5);
    const std::vector<Real> targets{0.1, -0.3, 0.5, 0.0, 0.2};
    auto report = diff::grad_check(m.parameters(), [&](diff::Tape& t) {
      const std::array<const data::Segment*, 1> one{&s};
      return credit::prior_loss(t, m.forward_segments(t, one).rewards, targets);
    }, 1e-4);
    CHECK_MESSAGE(report.passed(), report.summary());
  }
}

TEST_CASE("bisimulation metric gradients") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1);
  auto rnd = [&](int r, int c) {
    diff::Tensor t = diff::Tensor::zeros({r, c});
    for (auto& v : t.data) v = n(rng);
    return t;
  };
  diff::Parameter zi{"zi", rnd(4, 3)}, zj{"zj", rnd(4, 3)}, ri{"ri", rnd(4, 1)}, rj{"rj", rnd(4, 1)};
  diff::Parameter ni{"ni", rnd(4, 3)}, nj{"nj", rnd(4, 3)};
  auto report = diff::grad_check({&zi, &zj, &ri, &rj, &ni, &nj}, [&](diff::Tape& t) {
    return credit::bisim_loss(t.parameter(zi), t.parameter(zj), t.parameter(ri), t.parameter(rj), t.parameter(ni),
                              t.parameter(nj), 0.99);
  }, 1e-4);
  CHECK_MESSAGE(report.passed(), report.summary());
}

TEST_CASE("combined loss gradient equals ce plus weighted prior with frozen targets") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(seed);
    reward::RewardMember m(small_net(), seed);
    auto b = batch(rng, 2, 4);
    std::vector<const data::PreferenceTriplet*> ptrs{&b[0], &b[1]};
    std::vector<credit::TripletImportance> imp{{{0.1, 0.2, 0.3, 0.4}, {0.4, 0.3, 0.2, 0.1}},
                                               {{0.25, 0.25, 0.25, 0.25}, {0.7, 0.1, 0.1, 0.1}}};
    auto strategy = credit::CreditStrategy::parse("prior", "pointmass");
    worldmodel::WorldModelConfig wc;
    wc.segment_length = 4;
    worldmodel::WorldModel wm(3, envs::ContinuousSpace{2, -1, 1}, wc, 1);

    // Targets from the current returns, then held fixed for finite differences.
    std::vector<Real> targets;
    for (int s = 0; s < 4; ++s) {
      const auto& seg = s < 2 ? ptrs[s]->seg_a : ptrs[s - 2]->seg_b;
      const auto& alpha = s < 2 ? imp[s].a : imp[s - 2].b;
      const auto t = credit::reward_targets(credit::CreditKind::prior, alpha, reward::predicted_return(m, seg), 4);
      targets.insert(targets.end(), t.begin(), t.end());
    }
    auto reference = [&](diff::Tape& t) {
      std::vector<const data::Segment*> segs{&b[0].seg_a, &b[1].seg_a, &b[0].seg_b, &b[1].seg_b};
      auto fwd = m.forward_segments(t, segs);
      diff::Var aux = diff::scale(credit::prior_loss(t, fwd.rewards, targets), 2 * strategy.lambda);
      return diff::add(reward::ce_loss(t, m, ptrs), aux);
    };
    auto report = diff::grad_check(m.parameters(), reference, 1e-4);
    CHECK_MESSAGE(report.passed(), report.summary());

    const auto ref = diff::forward_backward(diff::as_const(m.parameters()), reference);
    const auto got = diff::forward_backward(diff::as_const(m.parameters()), [&](diff::Tape& t) {
      return credit::combined_loss(t, m, ptrs, strategy, &wm, imp);
    });
    CHECK(got.loss == doctest::Approx(ref.loss).epsilon(1e-10));
    for (std::size_t p = 0; p < ref.gradients.size(); ++p)
      for (std::size_t i = 0; i < ref.gradients[p].size(); ++i)
        CHECK(got.gradients[p][i] == doctest::Approx(ref.gradients[p][i]).epsilon(1e-8));
  }
}

TEST_CASE("td loss gradients") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    agent::DqnConfig cfg;
    cfg.hidden = 8;
    agent::DqnAgent a(3, 4, cfg, seed);
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> n(0, 1);
    std::vector<data::Transition> ts(6);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      ts[i].state = {static_cast<Real>(n(rng)), static_cast<Real>(n(rng)), static_cast<Real>(n(rng))};
      ts[i].next_state = {static_cast<Real>(n(rng)), static_cast<Real>(n(rng)), static_cast<Real>(n(rng))};
      ts[i].action_id = static_cast<int>(i % 4);
      ts[i].reward_label = static_cast<Real>(n(rng));
      ts[i].done = i == 2;
    }
    std::vector<const data::Transition*> ptrs;
    for (const auto& t : ts) ptrs.push_back(&t);
    // Bootstrap values come from the target copy, which perturbation leaves alone.
    auto report = diff::grad_check(a.parameters(), [&](diff::Tape& t) { return a.td_loss(t, ptrs); }, 1e-4);
    CHECK_MESSAGE(report.passed(), report.summary());
  }
}
