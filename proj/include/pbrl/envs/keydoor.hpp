#pragma once

#include <optional>
#include <vector>

#include "pbrl/envs/env.hpp"

PBRL_NAMESPACE_BEGIN
namespace envs {

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct KeyDoorConfig {
  int size = 7;
  Cell key{1, 1};
  Cell door{5, 5};
  std::vector<Cell> walls;
  int horizon = 100;
  /// Fixed start cell; when empty the agent starts on a random free cell.
  std::optional<Cell> start;

  static KeyDoorConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// N x N grid: pick up the key, then enter the door. Actions are
/// up/down/left/right; walls and borders make a move a no-op. The only
/// rewarding transition is reaching the door while holding the key (+1, ends
/// the episode). Observation: one-hot agent cell, has-key bit, one-hot key
/// cell (zero once collected), one-hot door cell.
class KeyDoorGrid final : public Environment {
 public:
  enum Move : int { up = 0, down = 1, left = 2, right = 3 };

  explicit KeyDoorGrid(KeyDoorConfig config = {});

  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(std::mt19937_64& rng) override;
  StepResult step(const Action& action) override;
  EnvState state() const override;
  nlohmann::json render() const override;
  void restore(const nlohmann::json& frame) override;
  Real target_reward(const Observation& s, const Action& a, const Observation& next) const override;
  std::uint64_t state_key(const Observation& obs) const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<KeyDoorGrid>(*this); }

  const KeyDoorConfig& config() const { return config_; }
  Cell agent() const { return agent_; }
  bool has_key() const { return has_key_; }
  /// Places the agent directly (tests and scripted policies).
  void set_state(Cell agent, bool has_key, int step_index = 0);

  Observation observe() const;
  static bool holds_key(const Observation& obs, int size);
  static Cell agent_cell(const Observation& obs, int size);

 private:
  bool blocked(Cell c) const;
  int index(Cell c) const { return c.row * config_.size + c.col; }

  KeyDoorConfig config_;
  EnvSpec spec_;
  Cell agent_{};
  bool has_key_ = false;
  bool done_ = false;
  int step_index_ = 0;
};

}  // namespace envs
PBRL_NAMESPACE_END
