#include "pbrl/envs/env.hpp"

#include <type_traits>

#include "pbrl/envs/keydoor.hpp"
#include "pbrl/envs/pointmass.hpp"

PBRL_NAMESPACE_BEGIN
namespace envs {

int action_dim(const ActionSpace& space) {
  return std::visit(
      [](const auto& s) {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, DiscreteSpace>) {
          return s.n;
        } else {
          return s.dim;
        }
      },
      space);
}

bool is_discrete(const ActionSpace& space) { return std::holds_alternative<DiscreteSpace>(space); }

Action one_hot_action(int index, int n) {
  if (index < 0 || index >= n) throw ActionError("action index " + std::to_string(index) + " outside [0, " + std::to_string(n) + ")");
  Action a(static_cast<std::size_t>(n), Real(0));
  a[static_cast<std::size_t>(index)] = Real(1);
  return a;
}

int action_index(const Action& action) {
  int hot = -1;
  for (std::size_t i = 0; i < action.size(); ++i) {
    if (action[i] == Real(1)) {
      if (hot >= 0) throw ActionError("action has more than one hot entry");
      hot = static_cast<int>(i);
    } else if (action[i] != Real(0)) {
      throw ActionError("discrete action is not one-hot");
    }
  }
  if (hot < 0) throw ActionError("discrete action has no hot entry");
  return hot;
}

std::unique_ptr<Environment> make_environment(const std::string& name, const nlohmann::json& config) {
  const nlohmann::json layout = config.is_null() ? nlohmann::json::object() : config;
  if (name == "keydoor") return std::make_unique<KeyDoorGrid>(KeyDoorConfig::from_json(layout));
  if (name == "pointmass") return std::make_unique<PointMass>(PointMassConfig::from_json(layout));
  throw ConfigError("unknown environment '" + name + "' (expected keydoor|pointmass)");
}

}  // namespace envs
PBRL_NAMESPACE_END
