#include "pbrl/data/segment.hpp"

PBRL_NAMESPACE_BEGIN
namespace data {

Real Segment::target_return() const {
  Real total = 0;
  for (Real r : target_rewards) total += r;
  return total;
}

bool PreferenceLabel::valid() const {
  return (a == 1 && b == 0) || (a == 0 && b == 1) || (a == Real(0.5) && b == Real(0.5));
}

nlohmann::json to_json(const Segment& s) {
  return {{"source_episode", s.source_episode},
          {"start_index", s.start_index},
          {"states", s.states},
          {"actions", s.actions},
          {"target_rewards", s.target_rewards}};
}

Segment segment_from_json(const nlohmann::json& j) {
  Segment s;
  s.source_episode = j.at("source_episode").get<std::int64_t>();
  s.start_index = j.at("start_index").get<int>();
  s.states = j.at("states").get<std::vector<envs::Observation>>();
  s.actions = j.at("actions").get<std::vector<envs::Action>>();
  s.target_rewards = j.at("target_rewards").get<std::vector<Real>>();
  if (!s.valid()) throw DataError("segment lists have different lengths");
  return s;
}

nlohmann::json to_json(const PreferenceTriplet& t) {
  return {{"query_id", t.query_id},
          {"label", {t.label.a, t.label.b}},
          {"labeler", t.labeler},
          {"timestamp", t.timestamp},
          {"seg_a", to_json(t.seg_a)},
          {"seg_b", to_json(t.seg_b)}};
}

PreferenceTriplet triplet_from_json(const nlohmann::json& j) {
  PreferenceTriplet t;
  t.query_id = j.value("query_id", std::int64_t{-1});
  t.label = {j.at("label").at(0).get<Real>(), j.at("label").at(1).get<Real>()};
  if (!t.label.valid()) throw DataError("invalid preference label");
  t.labeler = j.value("labeler", "");
  t.timestamp = j.value("timestamp", std::int64_t{0});
  t.seg_a = segment_from_json(j.at("seg_a"));
  t.seg_b = segment_from_json(j.at("seg_b"));
  return t;
}

}  // namespace data
PBRL_NAMESPACE_END
