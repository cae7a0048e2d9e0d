#include "pbrl/envs/pointmass.hpp"

#include <algorithm>
#include <cmath>

PBRL_NAMESPACE_BEGIN
namespace envs {

PointMassConfig PointMassConfig::from_json(const nlohmann::json& j) {
  PointMassConfig c;
  if (j.contains("goal")) c.goal = {j["goal"].at(0).get<Real>(), j["goal"].at(1).get<Real>()};
  c.arena_low = j.value("arena_low", c.arena_low);
  c.arena_high = j.value("arena_high", c.arena_high);
  c.max_action = j.value("max_action", c.max_action);
  c.success_radius = j.value("success_radius", c.success_radius);
  c.horizon = j.value("horizon", c.horizon);
  return c;
}

nlohmann::json PointMassConfig::to_json() const {
  return {{"goal", {goal[0], goal[1]}},
          {"arena_low", arena_low},
          {"arena_high", arena_high},
          {"max_action", max_action},
          {"success_radius", success_radius},
          {"horizon", horizon}};
}

PointMass::PointMass(PointMassConfig config) : config_(config) {
  if (!(config_.arena_low < config_.arena_high) || config_.max_action <= 0 || config_.horizon < 1) {
    throw ConfigError("invalid pointmass configuration");
  }
  spec_ = EnvSpec{"pointmass", 4, ContinuousSpace{2, -config_.max_action, config_.max_action}, config_.horizon};
}

EnvState PointMass::reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(config_.arena_low, config_.arena_high);
  position_ = {static_cast<Real>(u(rng)), static_cast<Real>(u(rng))};
  done_ = false;
  step_index_ = 0;
  return state();
}

void PointMass::set_position(std::array<Real, 2> p, int step_index) {
  position_ = p;
  step_index_ = step_index;
  done_ = false;
}

EnvState PointMass::state() const {
  return EnvState{{position_[0], position_[1], config_.goal[0], config_.goal[1]}, done_, step_index_};
}

StepResult PointMass::step(const Action& action) {
  if (done_) throw EpisodeError("step on a finished pointmass episode");
  if (action.size() != 2) throw ActionError("pointmass expects a 2-D action");
  for (Real a : action) {
    if (!std::isfinite(a) || a < -config_.max_action || a > config_.max_action) {
      throw ActionError("pointmass action component " + std::to_string(a) + " outside the action box");
    }
  }
  const Observation before = state().observation;
  for (int i = 0; i < 2; ++i) {
    position_[i] = std::clamp(position_[i] + action[i], config_.arena_low, config_.arena_high);
  }
  ++step_index_;
  done_ = step_index_ >= config_.horizon;
  StepResult r;
  r.state = state();
  r.target_reward = target_reward(before, action, r.state.observation);
  r.success = -r.target_reward <= config_.success_radius;
  return r;
}

Real PointMass::target_reward(const Observation&, const Action&, const Observation& next) const {
  const Real dx = next.at(0) - next.at(2);
  const Real dy = next.at(1) - next.at(3);
  return -std::sqrt(dx * dx + dy * dy);
}

std::uint64_t PointMass::state_key(const Observation& obs) const {
  const auto bin = [this](Real v) {
    return static_cast<std::uint64_t>(std::floor((v - config_.arena_low) / Real(0.05)));
  };
  return bin(obs.at(0)) * 1000003u + bin(obs.at(1));
}

Action PointMass::discretized_action(int index) const {
  if (index < 0 || index >= 9) throw ActionError("pointmass discrete action outside [0, 9)");
  const Real m = config_.max_action;
  return {static_cast<Real>(index % 3 - 1) * m, static_cast<Real>(index / 3 - 1) * m};
}

nlohmann::json PointMass::render() const {
  return {{"kind", "points"},
          {"agent", {position_[0], position_[1]}},
          {"goal", {config_.goal[0], config_.goal[1]}},
          {"step_index", step_index_},
          {"done", done_}};
}

void PointMass::restore(const nlohmann::json& frame) {
  if (frame.value("kind", "") != "points") throw ConfigError("frame does not describe a pointmass state");
  set_position({frame.at("agent").at(0).get<Real>(), frame.at("agent").at(1).get<Real>()},
               frame.at("step_index").get<int>());
  done_ = frame.at("done").get<bool>();
}

}  // namespace envs
PBRL_NAMESPACE_END
