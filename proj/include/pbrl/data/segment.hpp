#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pbrl/envs/env.hpp"

PBRL_NAMESPACE_BEGIN
namespace data {

/// Fixed-length slice of one stored episode. target_rewards are hidden from
/// the reward learner; only oracles and metrics read them.
struct Segment {
  std::vector<envs::Observation> states;
  std::vector<envs::Action> actions;
  std::vector<Real> target_rewards;
  std::int64_t source_episode = -1;
  int start_index = 0;

  int length() const { return static_cast<int>(states.size()); }
  bool valid() const { return actions.size() == states.size() && target_rewards.size() == states.size(); }
  Real target_return() const;
};

/// Soft preference label (y_a, y_b).
struct PreferenceLabel {
  Real a = 0;
  Real b = 0;

  static PreferenceLabel prefer_a() { return {1, 0}; }
  static PreferenceLabel prefer_b() { return {0, 1}; }
  static PreferenceLabel equal() { return {Real(0.5), Real(0.5)}; }
  bool is_neutral() const { return a == b; }
  PreferenceLabel swapped() const { return {b, a}; }
  /// One of (1,0), (0,1), (0.5,0.5).
  bool valid() const;
  friend bool operator==(const PreferenceLabel&, const PreferenceLabel&) = default;
};

struct PreferenceTriplet {
  Segment seg_a;
  Segment seg_b;
  PreferenceLabel label;
  std::string labeler;
  /// Training step for synthetic labels, unix milliseconds for human labels.
  std::int64_t timestamp = 0;
  std::int64_t query_id = -1;
};

nlohmann::json to_json(const Segment& s);
Segment segment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PreferenceTriplet& t);
PreferenceTriplet triplet_from_json(const nlohmann::json& j);

}  // namespace data
PBRL_NAMESPACE_END
