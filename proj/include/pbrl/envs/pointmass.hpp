#pragma once

#include <array>

#include "pbrl/envs/env.hpp"

PBRL_NAMESPACE_BEGIN
namespace envs {

struct PointMassConfig {
  std::array<Real, 2> goal{Real(0.8), Real(0.8)};
  Real arena_low = 0;
  Real arena_high = 1;
  Real max_action = Real(0.1);
  Real success_radius = Real(0.05);
  int horizon = 100;

  static PointMassConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// 2-D point in a box, velocity-free: next = clip(position + action).
/// Reward is the negative distance of the next position to the goal.
/// Observation: (x, y, goal_x, goal_y).
class PointMass final : public Environment {
 public:
  explicit PointMass(PointMassConfig config = {});

  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(std::mt19937_64& rng) override;
  StepResult step(const Action& action) override;
  EnvState state() const override;
  nlohmann::json render() const override;
  void restore(const nlohmann::json& frame) override;
  Real target_reward(const Observation& s, const Action& a, const Observation& next) const override;
  std::uint64_t state_key(const Observation& obs) const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<PointMass>(*this); }

  void set_position(std::array<Real, 2> p, int step_index = 0);
  std::array<Real, 2> position() const { return position_; }
  const PointMassConfig& config() const { return config_; }

  /// The 3x3 grid {-max, 0, +max}^2 used by discrete agents.
  Action discretized_action(int index) const;

 private:
  PointMassConfig config_;
  EnvSpec spec_;
  std::array<Real, 2> position_{};
  bool done_ = false;
  int step_index_ = 0;
};

}  // namespace envs
PBRL_NAMESPACE_END
