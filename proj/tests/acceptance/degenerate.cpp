#include <fmt/format.h>

#include "acceptance.hpp"
#include "pbrl/credit/credit.hpp"
#include "pbrl/diff/optim.hpp"
#include "pbrl/worldmodel/world_model.hpp"

using namespace pbrl;

namespace {

data::Segment random_segment(std::mt19937_64& rng, int length) {
  std::normal_distribution<Real> n(0, 1);
  data::Segment s;
  for (int t = 0; t < length; ++t) {
    s.states.push_back({n(rng), n(rng), n(rng)});
    s.actions.push_back({n(rng), n(rng)});
    s.target_rewards.push_back(0);
  }
  return s;
}

bool bit_equal(const diff::LossAndGradients& a, const diff::LossAndGradients& b) {
  return a.loss == b.loss && a.gradients == b.gradients;
}

}  // namespace

Outcome degenerate_equivalences() {
  const int steps = 6;
  worldmodel::WorldModelConfig wc;
  wc.segment_length = steps;
  worldmodel::WorldModel wm(3, envs::ContinuousSpace{2, -1, 1}, wc, 1);

  int lambda_cases = 0, lambda_ok = 0;
  int rvar_cases = 0, rvar_ok = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    reward::RewardMember m({.state_dim = 3, .action_dim = 2, .hidden = 16, .hidden_layers = 2}, seed);
    std::vector<data::PreferenceTriplet> batch;
    const data::PreferenceLabel labels[] = {data::PreferenceLabel::prefer_a(), data::PreferenceLabel::prefer_b(),
                                            data::PreferenceLabel::equal()};
    for (int i = 0; i < 4; ++i) batch.push_back({random_segment(rng, steps), random_segment(rng, steps), labels[i % 3]});
    std::vector<const data::PreferenceTriplet*> ptrs;
    for (const auto& t : batch) ptrs.push_back(&t);

    const auto ce = diff::forward_backward(diff::as_const(m.parameters()),
                                           [&](diff::Tape& t) { return reward::ce_loss(t, m, ptrs); });
    for (const char* method : {"prior", "rvar", "nrp", "bisim", "none", "prior-only"}) {
      auto s = credit::CreditStrategy::parse(method, "keydoor");
      s.lambda = 0;
      std::mt19937_64 pair_rng(seed);
      const auto got = diff::forward_backward(diff::as_const(m.parameters()), [&](diff::Tape& t) {
        return credit::combined_loss(t, m, ptrs, s, &wm, {}, &pair_rng);
      });
      ++lambda_cases;
      lambda_ok += bit_equal(got, ce) ? 1 : 0;
    }

    // rvar against prior fed uniform importance 1/T.
    std::vector<credit::TripletImportance> uniform(ptrs.size());
    for (auto& u : uniform) u.a = u.b = std::vector<Real>(steps, Real(1) / steps);
    const auto rvar = diff::forward_backward(diff::as_const(m.parameters()), [&](diff::Tape& t) {
      return credit::combined_loss(t, m, ptrs, credit::CreditStrategy::parse("rvar", "keydoor"), &wm);
    });
    const auto prior = diff::forward_backward(diff::as_const(m.parameters()), [&](diff::Tape& t) {
      return credit::combined_loss(t, m, ptrs, credit::CreditStrategy::parse("prior", "keydoor"), &wm, uniform);
    });
    ++rvar_cases;
    rvar_ok += bit_equal(rvar, prior) ? 1 : 0;
  }

  std::mt19937_64 rng(77);
  for (int i = 0; i < 500; ++i) {
    const int t = 1 + static_cast<int>(rng() % 100);
    const Real g = std::uniform_real_distribution<Real>(-t, t)(rng);
    ++rvar_cases;
    rvar_ok += credit::reward_targets(credit::CreditKind::rvar, {}, g, t) ==
                       credit::reward_targets(credit::CreditKind::prior, std::vector<Real>(t, Real(1) / t), g, t)
                   ? 1
                   : 0;
  }

  int uniform_cases = 0, uniform_ok = 0;
  for (int layers = 1; layers <= 4; ++layers) {
    for (int t = 1; t <= 60; ++t) {
      worldmodel::AttentionMap map;
      for (int l = 0; l < layers; ++l) map.layers.emplace_back(2 * t, Real(1) / (2 * t));
      const auto alpha = credit::importance_from_attention(map);
      const Real g = std::uniform_real_distribution<Real>(-t, t)(rng);
      ++uniform_cases;
      uniform_ok += credit::reward_targets(credit::CreditKind::prior, alpha, g, t) ==
                            credit::reward_targets(credit::CreditKind::rvar, {}, g, t)
                        ? 1
                        : 0;
    }
  }

  const bool ok = lambda_ok == lambda_cases && rvar_ok == rvar_cases && uniform_ok == uniform_cases;
  return {ok, fmt::format("lambda=0 vs ce bit-equal {}/{}; rvar vs prior(1/T) {}/{}; uniform map prior vs rvar {}/{}",
                          lambda_ok, lambda_cases, rvar_ok, rvar_cases, uniform_ok, uniform_cases)};
}
