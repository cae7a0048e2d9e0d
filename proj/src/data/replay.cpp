#include "pbrl/data/replay.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string_view>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "pbrl/reward/reward_model.hpp"

PBRL_NAMESPACE_BEGIN
namespace data {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::add(Transition t) {
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(t));
}

std::vector<EpisodeSpan> ReplayBuffer::episodes() const {
  std::vector<EpisodeSpan> out;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (out.empty() || out.back().episode != items_[i].episode) {
      out.push_back({items_[i].episode, i, 0});
    }
    ++out.back().length;
  }
  return out;
}

Segment ReplayBuffer::segment(std::size_t begin, int length) const {
  if (length < 1 || begin + static_cast<std::size_t>(length) > items_.size()) {
    throw DataError("segment runs past the end of the buffer");
  }
  Segment s;
  s.source_episode = items_[begin].episode;
  s.start_index = items_[begin].step_index;
  for (std::size_t i = begin; i < begin + static_cast<std::size_t>(length); ++i) {
    const auto& t = items_[i];
    if (t.episode != s.source_episode) throw DataError("segment would cross an episode boundary");
    s.states.push_back(t.state);
    s.actions.push_back(t.action);
    s.target_rewards.push_back(t.target_reward);
  }
  return s;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t count, std::mt19937_64& rng) const {
  if (items_.empty()) throw DataError("sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<std::size_t> out(count);
  for (auto& i : out) i = pick(rng);
  return out;
}

std::vector<SegmentPair> sample_candidate_pairs(const ReplayBuffer& buffer, std::size_t count, int length,
                                                std::uint64_t seed) {
  if (length < 1) throw ConfigError("segment length must be positive");
  std::vector<std::size_t> starts;
  for (const auto& ep : buffer.episodes()) {
    for (int o = 0; o + length <= ep.length; ++o) starts.push_back(ep.begin + static_cast<std::size_t>(o));
  }
  if (starts.empty()) throw DataError("no stored episode is at least " + std::to_string(length) + " steps long");
  if (count == 0) return {};
  if (starts.size() < 2) throw DataError("only one distinct segment available; cannot form a pair");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
  std::vector<SegmentPair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (b == a) b = pick(rng);
    out.emplace_back(buffer.segment(starts[a], length), buffer.segment(starts[b], length));
  }
  return out;
}

namespace {

/// Member returns for many segments, evaluating each distinct (s, a) row once.
class ReturnTable {
 public:
  explicit ReturnTable(const reward::RewardMember& member) : member_(member) {}

  Real operator()(const Segment& seg) {
    Real total = 0;
    for (int t = 0; t < seg.length(); ++t) total += reward(seg.states[t], seg.actions[t]);
    return total;
  }

  Real reward(const envs::Observation& s, const envs::Action& a) {
    key_.assign(reinterpret_cast<const char*>(s.data()), s.size() * sizeof(Real));
    key_.append(reinterpret_cast<const char*>(a.data()), a.size() * sizeof(Real));
    auto it = cache_.find(key_);
    if (it != cache_.end()) return it->second;
    const Real r = member_.evaluate(s, a);
    cache_.emplace(key_, r);
    return r;
  }

 private:
  const reward::RewardMember& member_;
  std::string key_;
  std::unordered_map<std::string, Real> cache_;
};

}  // namespace

std::vector<Real> disagreement(std::span<const SegmentPair> pairs, const reward::RewardEnsemble& ensemble) {
  const int e = ensemble.size();
  std::vector<std::vector<Real>> probs(pairs.size(), std::vector<Real>(static_cast<std::size_t>(e)));
  for (int k = 0; k < e; ++k) {
    ReturnTable returns(ensemble.member(k));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      probs[i][static_cast<std::size_t>(k)] =
          reward::preference_from_returns(returns(pairs[i].first), returns(pairs[i].second));
    }
  }
  std::vector<Real> out(pairs.size(), 0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double mean = std::accumulate(probs[i].begin(), probs[i].end(), 0.0) / e;
    double var = 0;
    for (Real p : probs[i]) var += (p - mean) * (p - mean);
    out[i] = static_cast<Real>(var / e);
  }
  return out;
}

std::vector<std::size_t> select_queries(std::span<const SegmentPair> pairs, const reward::RewardEnsemble& ensemble,
                                        std::size_t m, std::mt19937_64& rng) {
  if (m > pairs.size()) throw DataError("asked for more queries than candidate pairs");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (ensemble.size() < 2) {
    spdlog::warn("ensemble has {} member(s); selecting queries uniformly at random", ensemble.size());
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(m);
    return order;
  }
  const auto var = disagreement(pairs, ensemble);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return var[a] > var[b]; });
  order.resize(m);
  return order;
}

void relabel(ReplayBuffer& buffer, const reward::RewardEnsemble& ensemble) {
  std::unordered_map<std::string, Real> cache;
  std::string key;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    auto& t = buffer.at(i);
    key.assign(reinterpret_cast<const char*>(t.state.data()), t.state.size() * sizeof(Real));
    key.append(reinterpret_cast<const char*>(t.action.data()), t.action.size() * sizeof(Real));
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, reward::ensemble_reward(ensemble, t.state, t.action)).first;
    t.reward_label = it->second;
  }
}

PreferenceDataset::PreferenceDataset(std::string path) : path_(std::move(path)) {
  std::ofstream touch(path_, std::ios::app);
  if (!touch) throw DataError("cannot open preference file " + path_);
}

void PreferenceDataset::append(PreferenceTriplet t) {
  if (!t.label.valid()) throw DataError("invalid preference label");
  if (t.seg_a.length() != t.seg_b.length()) throw DataError("preference segments differ in length");
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app);
    out << to_json(t).dump() << '\n';
    if (!out) throw DataError("failed writing preference file " + path_);
  }
  items_.push_back(std::move(t));
}

std::vector<PreferenceTriplet> PreferenceDataset::load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read preference file " + path);
  std::vector<PreferenceTriplet> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(triplet_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace data
PBRL_NAMESPACE_END
