#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "pbrl/diff/optim.hpp"

using namespace pbrl;
using namespace pbrl::reward;
using test_helpers::make_constant;
using test_helpers::random_segment;

namespace {

RewardNetConfig small_config() { return RewardNetConfig{.state_dim = 3, .action_dim = 2, .hidden = 8}; }

}  // namespace

TEST_CASE("preference probability: analytic cases") {
  CHECK(preference_from_returns(2, 2) == doctest::Approx(0.5));
  CHECK(Real(1) - preference_from_returns(0, static_cast<Real>(std::log(3.0))) == doctest::Approx(0.75));
  const Real p = preference_from_returns(50, -50);
  CHECK(std::isfinite(p));
  CHECK(p == doctest::Approx(1));
  CHECK(preference_from_returns(-50, 50) >= 0);
}

TEST_CASE("preference probability is antisymmetric and shift invariant") {
  std::mt19937_64 rng(2);
  RewardMember m(small_config(), 7);
  for (int i = 0; i < 50; ++i) {
    auto a = random_segment(rng, 6, 3, 2), b = random_segment(rng, 6, 3, 2);
    const Real p = preference_probability(m, a, b), q = preference_probability(m, b, a);
    CHECK(std::abs(p + q - 1) < 1e-6);
  }
  for (Real c : {0.1f, -0.3f}) {
    const Real ga = 1.2f, gb = -0.4f;
    CHECK(preference_from_returns(ga + 6 * c, gb + 6 * c) == doctest::Approx(preference_from_returns(ga, gb)).epsilon(1e-6));
  }
}

TEST_CASE("predicted return is the sum of evaluate calls") {
  std::mt19937_64 rng(1);
  RewardMember m(small_config(), 3);
  auto seg = random_segment(rng, 50, 3, 2);
  Real manual = 0;
  for (int t = 0; t < 50; ++t) manual += m.evaluate(seg.states[t], seg.actions[t]);
  CHECK(predicted_return(m, seg) == manual);
  make_constant(m, 0);
  CHECK(predicted_return(m, seg) == 0);
  make_constant(m, 0.1f);
  CHECK(predicted_return(m, seg) == doctest::Approx(5.0));
}

TEST_CASE("ensemble reward is the member mean") {
  std::mt19937_64 rng(1);
  auto seg = random_segment(rng, 1, 3, 2);
  RewardEnsemble single(small_config(), 1, 5);
  CHECK(ensemble_reward(single, seg.states[0], seg.actions[0]) == single.member(0).evaluate(seg.states[0], seg.actions[0]));
  RewardEnsemble e(small_config(), 3, 5);
  make_constant(e.member(0), 0.2f);
  make_constant(e.member(1), 0.4f);
  make_constant(e.member(2), 0.6f);
  CHECK(ensemble_reward(e, seg.states[0], seg.actions[0]) == doctest::Approx(0.4));
  RewardEnsemble perm({e.member(2), e.member(0), e.member(1)});
  CHECK(ensemble_reward(perm, seg.states[0], seg.actions[0]) == doctest::Approx(0.4));
}

TEST_CASE("ce loss analytic values") {
  std::mt19937_64 rng(4);
  RewardMember m(small_config(), 1);
  make_constant(m, 0.3f);
  std::vector<data::PreferenceTriplet> batch(2);
  for (auto& t : batch) {
    t.seg_a = random_segment(rng, 4, 3, 2);
    t.seg_b = random_segment(rng, 4, 3, 2);
  }
  batch[0].label = data::PreferenceLabel::prefer_a();
  batch[1].label = data::PreferenceLabel::prefer_b();
  CHECK(ce_loss(m, batch) == doctest::Approx(std::log(2.0)));
  batch[0].label = batch[1].label = data::PreferenceLabel::equal();
  CHECK(ce_loss(m, batch) == doctest::Approx(std::log(2.0)));

  diff::Tape tape;
  const std::array<data::PreferenceLabel, 1> y{data::PreferenceLabel::prefer_a()};
  auto loss = ce_loss_from_returns(tape, tape.constant(diff::Tensor::scalar(100)), tape.constant(diff::Tensor::scalar(-100)), y);
  CHECK(loss.item() == doctest::Approx(1e-7).epsilon(0.05));
}

TEST_CASE("segment forward dedupes rows and matches evaluate") {
  std::mt19937_64 rng(6);
  RewardMember m(small_config(), 2);
  auto a = random_segment(rng, 5, 3, 2);
  auto b = a;  // identical rows collapse
  std::vector<const data::Segment*> segs{&a, &b};
  diff::Tape tape;
  auto fwd = m.forward_segments(tape, segs);
  CHECK(fwd.embeddings.rows() == 5);
  CHECK(fwd.rewards.rows() == 2);
  CHECK(fwd.rewards.cols() == 5);
  for (int t = 0; t < 5; ++t) {
    CHECK(fwd.rewards.value().at(1, t) == doctest::Approx(m.evaluate(a.states[t], a.actions[t])));
  }
}

TEST_CASE("reward checkpoint round trip") {
  RewardMember a(small_config(), 1), b(small_config(), 2);
  b.load_json(a.to_json());
  CHECK(diff::flatten(a.parameters()) == diff::flatten(b.parameters()));
}
