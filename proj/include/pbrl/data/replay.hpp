#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pbrl/data/segment.hpp"

PBRL_NAMESPACE_BEGIN
namespace reward {
class RewardEnsemble;
}
namespace data {

struct Transition {
  envs::Observation state;
  envs::Action action;
  /// Index into the agent's discrete action set.
  int action_id = 0;
  /// Current learned-reward estimate; rewritten by relabel().
  Real reward_label = 0;
  /// Environment reward, never shown to the reward learner or agent.
  Real target_reward = 0;
  envs::Observation next_state;
  /// True only for goal termination, not for horizon cut-offs.
  bool done = false;
  std::int64_t episode = 0;
  int step_index = 0;
};

/// Contiguous run of stored transitions from one episode.
struct EpisodeSpan {
  std::int64_t episode = 0;
  std::size_t begin = 0;  // logical buffer index
  int length = 0;
};

/// FIFO ring buffer. Logical index 0 is the oldest stored transition.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000);

  void add(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const Transition& at(std::size_t i) const { return items_.at(i); }
  Transition& at(std::size_t i) { return items_.at(i); }

  /// Episodes in storage order. An evicted head leaves the remaining tail as
  /// a shorter span.
  std::vector<EpisodeSpan> episodes() const;

  /// Slice [begin, begin+length) as a Segment; DataError if it crosses an
  /// episode boundary or the end of storage.
  Segment segment(std::size_t begin, int length) const;

  std::vector<std::size_t> sample_indices(std::size_t count, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

using SegmentPair = std::pair<Segment, Segment>;

/// Uniform pairs of distinct length-l segments drawn from all valid start
/// offsets in the buffer. Deterministic in seed. DataError when no episode is
/// long enough, or when fewer than two distinct segments exist and count > 0.
std::vector<SegmentPair> sample_candidate_pairs(const ReplayBuffer& buffer, std::size_t count, int length,
                                                std::uint64_t seed);

/// Population variance across members of P[a > b], one entry per pair.
std::vector<Real> disagreement(std::span<const SegmentPair> pairs, const reward::RewardEnsemble& ensemble);

/// Indices of the m pairs with largest disagreement, descending, ties by
/// lower index. With fewer than two members, m indices drawn uniformly
/// without replacement using rng.
std::vector<std::size_t> select_queries(std::span<const SegmentPair> pairs, const reward::RewardEnsemble& ensemble,
                                        std::size_t m, std::mt19937_64& rng);

/// reward_label <- mean ensemble reward for every stored transition.
void relabel(ReplayBuffer& buffer, const reward::RewardEnsemble& ensemble);

/// Append-only preference dataset with optional JSON-lines mirror on disk.
class PreferenceDataset {
 public:
  PreferenceDataset() = default;
  /// Every append is also written as one line to path (created if missing).
  explicit PreferenceDataset(std::string path);

  void append(PreferenceTriplet t);
  std::size_t size() const { return items_.size(); }
  const std::vector<PreferenceTriplet>& items() const { return items_; }
  const PreferenceTriplet& operator[](std::size_t i) const { return items_[i]; }

  static std::vector<PreferenceTriplet> load_jsonl(const std::string& path);

 private:
  std::string path_;
  std::vector<PreferenceTriplet> items_;
};

}  // namespace data
PBRL_NAMESPACE_END
