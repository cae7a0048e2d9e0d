#include <doctest.h>

#include <cmath>

#include "pbrl/envs/keydoor.hpp"
#include "pbrl/envs/pointmass.hpp"

using namespace pbrl;
using namespace pbrl::envs;

namespace {

Action move(int m) { return one_hot_action(m, 4); }

// Walks straight to a target cell: rows first, then columns.
Real walk(KeyDoorGrid& env, Cell target, bool& done) {
  Real total = 0;
  while (!done && !(env.agent() == target)) {
    const Cell a = env.agent();
    int m = a.row < target.row ? KeyDoorGrid::down
            : a.row > target.row ? KeyDoorGrid::up
            : a.col < target.col ? KeyDoorGrid::right
                                 : KeyDoorGrid::left;
    auto r = env.step(move(m));
    total += r.target_reward;
    done = r.state.done;
  }
  return total;
}

}  // namespace

TEST_CASE("keydoor: door with key gives +1 and ends the episode") {
  KeyDoorGrid env;
  env.set_state(env.config().door, true);
  auto r = env.step(move(KeyDoorGrid::left));
  CHECK(r.target_reward == 1);
  CHECK(r.state.done);
  CHECK(r.success);
  CHECK_THROWS_AS(env.step(move(0)), EpisodeError);
}

TEST_CASE("keydoor: no key, ordinary cell, zero reward") {
  KeyDoorGrid env;
  env.set_state({3, 3}, false);
  auto r = env.step(move(KeyDoorGrid::up));
  CHECK(r.target_reward == 0);
  CHECK_FALSE(r.state.done);
  env.set_state({5, 4}, false);
  r = env.step(move(KeyDoorGrid::right));  // onto the door without the key
  CHECK(r.target_reward == 0);
  CHECK_FALSE(r.state.done);
}

TEST_CASE("keydoor: walls and borders are no-ops") {
  KeyDoorConfig cfg;
  cfg.walls = {{3, 4}};
  KeyDoorGrid env(cfg);
  env.set_state({0, 0}, false);
  env.step(move(KeyDoorGrid::up));
  CHECK(env.agent() == Cell{0, 0});
  env.set_state({3, 3}, false);
  auto r = env.step(move(KeyDoorGrid::right));
  CHECK(env.agent() == Cell{3, 3});
  CHECK(r.target_reward == 0);
}

TEST_CASE("keydoor: scripted optimal policy returns exactly 1") {
  KeyDoorGrid env;
  std::mt19937_64 rng(4);
  for (int ep = 0; ep < 20; ++ep) {
    env.reset(rng);
    bool done = false;
    Real total = walk(env, env.config().key, done);
    CHECK(env.has_key());
    total += walk(env, env.config().door, done);
    CHECK(done);
    CHECK(total == 1);
  }
}

TEST_CASE("keydoor: bad actions") {
  KeyDoorGrid env;
  env.set_state({2, 2}, false);
  CHECK_THROWS_AS(env.step({0, 0, 0, 0}), ActionError);
  CHECK_THROWS_AS(env.step({1, 0}), ActionError);
}

TEST_CASE("keydoor: 5x5 render places agent, key and door") {
  KeyDoorConfig cfg;
  cfg.size = 5;
  cfg.key = {0, 4};
  cfg.door = {4, 0};
  cfg.start = Cell{2, 2};
  KeyDoorGrid env(cfg);
  std::mt19937_64 rng(0);
  env.reset(rng);
  auto f = env.render();
  CHECK(f["cells"][2].get<std::string>() == "..A..");
  CHECK(f["cells"][0].get<std::string>() == "....K");
  CHECK(f["cells"][4].get<std::string>() == "D....");
  CHECK(f["has_key"] == false);
}

TEST_CASE("keydoor: render/restore round trip agrees with step on 100 random states") {
  KeyDoorGrid env, replay;
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> act(0, 3);
  for (int i = 0; i < 100; ++i) {
    env.reset(rng);
    const int warm = act(rng) * 5;
    for (int s = 0; s < warm && !env.state().done; ++s) env.step(move(act(rng)));
    if (env.state().done) continue;
    replay.restore(env.render());
    CHECK(replay.render() == env.render());
    const int a = act(rng);
    auto r1 = env.step(move(a));
    auto r2 = replay.step(move(a));
    CHECK(r1.state.observation == r2.state.observation);
    CHECK(r1.target_reward == r2.target_reward);
    CHECK(replay.render() == env.render());
  }
}

TEST_CASE("keydoor: only door-with-key transitions pay") {
  KeyDoorGrid env;
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 7; ++c)
      for (bool key : {false, true})
        for (int a = 0; a < 4; ++a) {
          env.set_state({r, c}, key);
          auto res = env.step(move(a));
          const bool pays = env.has_key() && env.agent() == env.config().door;
          CHECK(res.target_reward == (pays ? 1 : 0));
        }
}

TEST_CASE("pointmass: reward is negative distance, zero at the goal") {
  PointMassConfig cfg;
  cfg.goal = {0.5f, 0.5f};
  PointMass env(cfg);
  env.set_position({0.45f, 0.5f});
  auto r = env.step({0.05f, 0});
  CHECK(r.target_reward == doctest::Approx(0).epsilon(1e-6));
  env.set_position({0.1f, 0.1f});
  r = env.step({0.1f, 0});
  CHECK(r.target_reward == doctest::Approx(-std::hypot(0.3, 0.4)));
}

TEST_CASE("pointmass: out-of-box action throws") {
  PointMass env;
  env.set_position({0.2f, 0.2f});
  CHECK_THROWS_AS(env.step({0.2f, 0}), ActionError);
}

TEST_CASE("pointmass: reward is translation invariant") {
  PointMassConfig c1, c2;
  c1.goal = {0.8f, 0.8f};
  c2.goal = {0.6f, 0.5f};
  PointMass e1(c1), e2(c2);
  const Observation s1{0.3f, 0.4f, 0.8f, 0.8f}, n1{0.35f, 0.45f, 0.8f, 0.8f};
  const Observation s2{0.1f, 0.1f, 0.6f, 0.5f}, n2{0.15f, 0.15f, 0.6f, 0.5f};
  CHECK(e1.target_reward(s1, {0.05f, 0.05f}, n1) == doctest::Approx(e2.target_reward(s2, {0.05f, 0.05f}, n2)));
}

TEST_CASE("pointmass: render yields two labelled points") {
  PointMassConfig cfg;
  cfg.goal = {1, 1};
  PointMass env(cfg);
  env.set_position({0.5f, 0.5f});
  auto f = env.render();
  CHECK(f["agent"][0] == 0.5);
  CHECK(f["goal"][1] == 1.0);
  PointMass other(cfg);
  other.restore(f);
  CHECK(other.position() == env.position());
}

TEST_CASE("environment factory") {
  CHECK(make_environment("keydoor")->spec().obs_dim == 148);
  CHECK(make_environment("pointmass")->spec().obs_dim == 4);
  CHECK_THROWS_AS(make_environment("atari"), ConfigError);
}
