#include <doctest.h>

#include <cmath>

#include "pbrl/worldmodel/world_model.hpp"

using namespace pbrl;
using namespace pbrl::worldmodel;

namespace {

data::Segment chain_segment(int steps, int phase) {
  data::Segment s;
  for (int t = 0; t < steps; ++t) {
    const int state = (t + phase) % 2;
    s.states.push_back(state == 0 ? envs::Observation{1, 0} : envs::Observation{0, 1});
    s.actions.push_back(envs::one_hot_action(0, 2));
    s.target_rewards.push_back(0);
  }
  return s;
}

}  // namespace

TEST_CASE("encoder is deterministic and indices are in range") {
  ObservationModel m(5, LatentConfig{}, 16, 3);
  const std::vector<envs::Observation> obs{{1, 2, 3, 4, 5}, {1, 2, 3, 4, 5}};
  auto e = m.encode(obs);
  CHECK(std::equal(e.logits.data.begin(), e.logits.data.begin() + 64, e.logits.data.begin() + 64));
  std::mt19937_64 rng(1);
  auto s = m.encode(obs, &rng);
  for (int i : s.indices) {
    CHECK(i >= 0);
    CHECK(i < 8);
  }
}

TEST_CASE("observation model reconstructs a two-observation toy set") {
  ObservationModel m(4, LatentConfig{}, 32, 5);
  const std::vector<envs::Observation> obs{{1, 0, 0.5f, 0}, {0, 1, 0, -0.5f}};
  diff::Adam opt(m.parameters(), {.lr = 3e-3f});
  std::mt19937_64 rng(2);
  const auto params = m.parameters();
  for (int i = 0; i < 1500; ++i) diff::train_step(params, opt, [&](diff::Tape& t) { return m.reconstruction_loss(t, obs, rng); });
  auto rec = m.reconstruct(obs);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(rec.data[r * 4 + c] - obs[r][c]) < 1e-2);
}

TEST_CASE("zeroed projections give uniform attention") {
  DynamicsConfig cfg;
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.max_steps = 6;
  DynamicsModel dyn(cfg, 1);
  for (auto* p : dyn.parameters()) {
    if (p->name.find(".query") != std::string::npos || p->name.find(".key") != std::string::npos) {
      std::fill(p->value.data.begin(), p->value.data.end(), Real(0));
    }
  }
  ObservationModel obs(2, cfg.latent, 8, 1);
  data::Segment seg;
  for (int t = 0; t < 6; ++t) {
    seg.states.push_back({Real(t), 1});
    seg.actions.push_back(envs::one_hot_action(t % 4, 4));
    seg.target_rewards.push_back(0);
  }
  auto map = extract_attention(dyn, obs, seg);
  REQUIRE(map.layers.size() == 1);
  REQUIRE(map.layers[0].size() == 12);
  for (Real w : map.layers[0]) CHECK(w == doctest::Approx(1.0 / 12));
}

TEST_CASE("attention maps are normalised per layer") {
  DynamicsConfig cfg;
  cfg.action_space = envs::ContinuousSpace{2, -0.1f, 0.1f};
  cfg.max_steps = 8;
  DynamicsModel dyn(cfg, 4);
  ObservationModel obs(4, cfg.latent, 8, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (int trial = 0; trial < 10; ++trial) {
    data::Segment seg;
    for (int t = 0; t < 8; ++t) {
      seg.states.push_back({Real(u(rng)), Real(u(rng)), 0.8f, 0.8f});
      seg.actions.push_back({Real(u(rng)), Real(u(rng))});
      seg.target_rewards.push_back(0);
    }
    auto map = extract_attention(dyn, obs, seg);
    CHECK(map.layers.size() == 2);
    for (const auto& l : map.layers) {
      double s = 0;
      for (Real w : l) {
        CHECK(w >= 0);
        s += w;
      }
      CHECK(std::abs(s - 1) < 1e-6);
    }
  }
}

TEST_CASE("dynamics loss analytic values") {
  DynamicsConfig cfg;
  cfg.max_steps = 4;
  DynamicsModel dyn(cfg, 2);
  // Zero head -> uniform prediction -> ln V per categorical.
  for (auto* p : dyn.parameters())
    if (p->name.find("dyn.head") != std::string::npos) std::fill(p->value.data.begin(), p->value.data.end(), Real(0));
  ObservationModel obs(2, cfg.latent, 8, 1);
  auto seg = chain_segment(4, 0);
  const std::array<const data::Segment*, 1> batch{&seg};
  diff::Tape tape;
  CHECK(dynamics_loss(tape, dyn, obs, batch).item() == doctest::Approx(8 * std::log(8.0)));

  // A confident correct prediction contributes ~0.
  diff::Tape t2;
  const std::array<diff::Tensor, 1> z{obs.mode_latents(seg.states)};
  const std::array<std::vector<envs::Action>, 1> a{seg.actions};
  for (auto* p : dyn.parameters())
    if (p->name == "dyn.head.bias") p->value.data.assign(64, 0);
  CHECK(dynamics_loss_from_latents(t2, dyn, z, a).item() >= 0);
}

TEST_CASE("dynamics loss learns the two-state chain") {
  WorldModelConfig cfg;
  cfg.segment_length = 8;
  WorldModel wm(2, envs::DiscreteSpace{2}, cfg, 7);
  std::vector<data::Segment> segs{chain_segment(8, 0), chain_segment(8, 1)};
  std::vector<const data::Segment*> ptrs{&segs[0], &segs[1]};
  Real loss = 0;
  int steps = 0;
  for (; steps < 2000; ++steps) {
    loss = wm.train_dynamics_on(ptrs);
    if (loss < 0.05f) break;
  }
  MESSAGE("chain loss " << loss << " after " << steps << " steps");
  CHECK(loss < 0.05f);
}

TEST_CASE("freezing keeps the observation model fixed") {
  data::ReplayBuffer buf;
  for (int t = 0; t < 30; ++t) {
    data::Transition tr;
    tr.state = {Real(t % 3), 1};
    tr.next_state = tr.state;
    tr.action = envs::one_hot_action(t % 2, 2);
    buf.add(tr);
  }
  WorldModelConfig cfg;
  cfg.segment_length = 5;
  cfg.obs_steps = 5;
  cfg.dyn_steps = 3;
  cfg.batch = 2;
  WorldModel wm(2, envs::DiscreteSpace{2}, cfg, 1);
  wm.pretrain_observation_model(buf);
  wm.freeze_observation_model();
  const auto before = diff::flatten(wm.observation().parameters());
  wm.train_dynamics(buf);
  CHECK(diff::flatten(wm.observation().parameters()) == before);
  CHECK_THROWS_AS(wm.pretrain_observation_model(buf), ConfigError);
}
