#include <doctest.h>

#include <set>

#include "pbrl/agent/dqn.hpp"

using namespace pbrl;
using namespace pbrl::agent;

TEST_CASE("greedy action and tie rule") {
  const std::vector<Real> q{0.1f, 0.9f, 0.3f};
  CHECK(greedy_action(q) == 1);
  const std::vector<Real> tie{0.5f, 0.5f, 0.5f};
  CHECK(greedy_action(tie) == 0);
}

TEST_CASE("epsilon one explores uniformly") {
  DqnAgent a(3, 4, {}, 1);
  std::mt19937_64 rng(5);
  std::vector<int> hits(4, 0);
  for (int i = 0; i < 4000; ++i) ++hits[static_cast<std::size_t>(a.act({0, 1, 0}, ActMode::explore, 1, rng))];
  for (int h : hits) CHECK(std::abs(h - 1000) < 150);
}

TEST_CASE("epsilon schedule") {
  DqnAgent a(3, 4, {}, 1);
  CHECK(a.epsilon_at(0) == 1);
  CHECK(a.epsilon_at(25000) == doctest::Approx(0.525));
  CHECK(a.epsilon_at(50000) == doctest::Approx(0.05));
  CHECK(a.epsilon_at(900000) == doctest::Approx(0.05));
}

TEST_CASE("terminal transition with matching Q has zero TD error") {
  DqnConfig cfg;
  cfg.hidden_layers = 1;
  cfg.hidden = 2;
  DqnAgent a(1, 1, cfg, 1);
  for (auto* p : a.parameters()) std::fill(p->value.data.begin(), p->value.data.end(), Real(0));
  a.parameters().back()->value.data[0] = 1;  // output bias: Q = 1 everywhere
  data::Transition t;
  t.state = {0.3f};
  t.next_state = {0.1f};
  t.reward_label = 1;
  t.done = true;
  const std::array<const data::Transition*, 1> batch{&t};
  diff::Tape tape;
  CHECK(a.td_loss(tape, batch).item() == 0);
}

TEST_CASE("target sync copies online parameters") {
  DqnConfig cfg;
  cfg.target_sync = 3;
  DqnAgent a(2, 2, cfg, 4);
  data::Transition t{{1, 0}, {}, 1, 0.5f, 0, {0, 1}, false, 0, 0};
  const std::array<const data::Transition*, 1> batch{&t};
  a.update(batch);
  CHECK(diff::flatten(a.target_parameters()) != diff::flatten(a.parameters()));
  a.update(batch);
  a.update(batch);
  CHECK(diff::flatten(a.target_parameters()) == diff::flatten(a.parameters()));
}

TEST_CASE("intrinsic reward decays with visits") {
  VisitCounts c;
  CHECK(intrinsic_pretrain_reward(c, 9) == 1);
  for (int i = 0; i < 3; ++i) c.add(9);
  CHECK(intrinsic_pretrain_reward(c, 9) == doctest::Approx(0.5));
  c.add(2);
  CHECK(intrinsic_pretrain_reward(c, 2) > intrinsic_pretrain_reward(c, 9));
}
