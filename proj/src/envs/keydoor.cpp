#include "pbrl/envs/keydoor.hpp"

#include <algorithm>
#include <cmath>

PBRL_NAMESPACE_BEGIN
namespace envs {

namespace {

nlohmann::json cell_json(Cell c) { return nlohmann::json::array({c.row, c.col}); }
Cell json_cell(const nlohmann::json& j) { return Cell{j.at(0).get<int>(), j.at(1).get<int>()}; }

}  // namespace

KeyDoorConfig KeyDoorConfig::from_json(const nlohmann::json& j) {
  KeyDoorConfig c;
  c.size = j.value("size", c.size);
  if (j.contains("key")) c.key = json_cell(j["key"]);
  if (j.contains("door")) c.door = json_cell(j["door"]);
  if (j.contains("walls")) {
    for (const auto& w : j["walls"]) c.walls.push_back(json_cell(w));
  }
  c.horizon = j.value("horizon", c.horizon);
  if (j.contains("start") && !j["start"].is_null()) c.start = json_cell(j["start"]);
  return c;
}

nlohmann::json KeyDoorConfig::to_json() const {
  nlohmann::json j;
  j["size"] = size;
  j["key"] = cell_json(key);
  j["door"] = cell_json(door);
  j["walls"] = nlohmann::json::array();
  for (auto w : walls) j["walls"].push_back(cell_json(w));
  j["horizon"] = horizon;
  j["start"] = start ? cell_json(*start) : nlohmann::json(nullptr);
  return j;
}

KeyDoorGrid::KeyDoorGrid(KeyDoorConfig config) : config_(std::move(config)) {
  const int n = config_.size;
  auto inside = [n](Cell c) { return c.row >= 0 && c.row < n && c.col >= 0 && c.col < n; };
  if (n < 2) throw ConfigError("keydoor grid must be at least 2x2");
  if (!inside(config_.key) || !inside(config_.door) || config_.key == config_.door) {
    throw ConfigError("keydoor key/door cells must be distinct and inside the grid");
  }
  for (auto w : config_.walls) {
    if (!inside(w) || w == config_.key || w == config_.door) throw ConfigError("keydoor wall on key, door, or outside grid");
  }
  if (config_.horizon < 1) throw ConfigError("keydoor horizon must be positive");
  spec_ = EnvSpec{"keydoor", 3 * n * n + 1, DiscreteSpace{4}, config_.horizon};
}

bool KeyDoorGrid::blocked(Cell c) const {
  const int n = config_.size;
  if (c.row < 0 || c.row >= n || c.col < 0 || c.col >= n) return true;
  return std::find(config_.walls.begin(), config_.walls.end(), c) != config_.walls.end();
}

EnvState KeyDoorGrid::reset(std::mt19937_64& rng) {
  has_key_ = false;
  done_ = false;
  step_index_ = 0;
  if (config_.start) {
    agent_ = *config_.start;
  } else {
    std::vector<Cell> free;
    for (int r = 0; r < config_.size; ++r) {
      for (int c = 0; c < config_.size; ++c) {
        Cell cell{r, c};
        if (!blocked(cell) && !(cell == config_.key) && !(cell == config_.door)) free.push_back(cell);
      }
    }
    std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
    agent_ = free[pick(rng)];
  }
  return state();
}

void KeyDoorGrid::set_state(Cell agent, bool has_key, int step_index) {
  if (blocked(agent)) throw ConfigError("agent placed on a wall or outside the grid");
  agent_ = agent;
  has_key_ = has_key;
  step_index_ = step_index;
  done_ = false;
}

Observation KeyDoorGrid::observe() const {
  const int cells = config_.size * config_.size;
  Observation obs(static_cast<std::size_t>(3 * cells + 1), Real(0));
  obs[static_cast<std::size_t>(index(agent_))] = 1;
  obs[static_cast<std::size_t>(cells)] = has_key_ ? 1 : 0;
  if (!has_key_) obs[static_cast<std::size_t>(cells + 1 + index(config_.key))] = 1;
  obs[static_cast<std::size_t>(2 * cells + 1 + index(config_.door))] = 1;
  return obs;
}

EnvState KeyDoorGrid::state() const { return EnvState{observe(), done_, step_index_}; }

StepResult KeyDoorGrid::step(const Action& action) {
  if (done_) throw EpisodeError("step on a finished keydoor episode");
  if (action.size() != 4) throw ActionError("keydoor expects a one-hot action of length 4");
  const int a = action_index(action);
  const Observation before = observe();

  StepResult result;
  if (!(has_key_ && agent_ == config_.door)) {
    Cell next = agent_;
    switch (a) {
      case up: --next.row; break;
      case down: ++next.row; break;
      case left: --next.col; break;
      case right: ++next.col; break;
      default: break;
    }
    if (!blocked(next)) agent_ = next;
    if (agent_ == config_.key) has_key_ = true;
  }
  ++step_index_;
  const bool at_exit = has_key_ && agent_ == config_.door;
  result.terminal = at_exit;
  result.success = at_exit;
  done_ = at_exit || step_index_ >= config_.horizon;
  result.state = state();
  result.target_reward = target_reward(before, action, result.state.observation);
  return result;
}

bool KeyDoorGrid::holds_key(const Observation& obs, int size) {
  return obs.at(static_cast<std::size_t>(size * size)) > Real(0.5);
}

Cell KeyDoorGrid::agent_cell(const Observation& obs, int size) {
  const int cells = size * size;
  for (int i = 0; i < cells; ++i) {
    if (obs.at(static_cast<std::size_t>(i)) > Real(0.5)) return Cell{i / size, i % size};
  }
  throw DataError("keydoor observation has no agent cell");
}

Real KeyDoorGrid::target_reward(const Observation&, const Action&, const Observation& next) const {
  return (holds_key(next, config_.size) && agent_cell(next, config_.size) == config_.door) ? Real(1) : Real(0);
}

std::uint64_t KeyDoorGrid::state_key(const Observation& obs) const {
  const Cell c = agent_cell(obs, config_.size);
  return static_cast<std::uint64_t>(index(c)) * 2u + (holds_key(obs, config_.size) ? 1u : 0u);
}

nlohmann::json KeyDoorGrid::render() const {
  nlohmann::json f;
  f["kind"] = "grid";
  f["size"] = config_.size;
  f["agent"] = cell_json(agent_);
  f["key"] = has_key_ ? nlohmann::json(nullptr) : cell_json(config_.key);
  f["door"] = cell_json(config_.door);
  f["has_key"] = has_key_;
  f["step_index"] = step_index_;
  f["done"] = done_;
  std::vector<std::string> rows(static_cast<std::size_t>(config_.size), std::string(static_cast<std::size_t>(config_.size), '.'));
  for (auto w : config_.walls) rows[w.row][w.col] = '#';
  rows[config_.door.row][config_.door.col] = 'D';
  if (!has_key_) rows[config_.key.row][config_.key.col] = 'K';
  rows[agent_.row][agent_.col] = 'A';
  f["cells"] = rows;
  return f;
}

void KeyDoorGrid::restore(const nlohmann::json& frame) {
  if (frame.value("kind", "") != "grid" || frame.at("size").get<int>() != config_.size) {
    throw ConfigError("frame does not describe this keydoor grid");
  }
  set_state(json_cell(frame.at("agent")), frame.at("has_key").get<bool>(), frame.at("step_index").get<int>());
  done_ = frame.at("done").get<bool>();
}

}  // namespace envs
PBRL_NAMESPACE_END
