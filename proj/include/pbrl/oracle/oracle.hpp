#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "pbrl/data/segment.hpp"

PBRL_NAMESPACE_BEGIN
namespace oracle {

enum class OracleKind { perfect, mistake, human };

struct OracleSpec {
  OracleKind kind = OracleKind::perfect;
  Real epsilon = 0;
  Real equal_threshold = 0;
  std::uint64_t seed = 0;
  /// Flip exactly round(epsilon * budget) of the first `budget` queries,
  /// chosen uniformly, instead of an independent coin per query.
  bool fixed_fraction = false;
  int budget = 0;

  /// "perfect", "mistake:<epsilon>" or "human".
  static OracleSpec parse(const std::string& text);
  std::string to_string() const;
  void validate() const;
};

/// Label by target return: higher sum wins, |difference| <= threshold is a tie.
data::PreferenceLabel perfect_label(const data::Segment& a, const data::Segment& b, Real equal_threshold);

/// Perfect and mistake teachers. Pure given the seed and the query sequence.
class SyntheticOracle {
 public:
  explicit SyntheticOracle(OracleSpec spec);

  data::PreferenceLabel label(const data::Segment& a, const data::Segment& b);
  data::PreferenceTriplet triplet(data::Segment a, data::Segment b, std::int64_t timestamp, std::int64_t query_id);

  const OracleSpec& spec() const { return spec_; }
  std::int64_t queries() const { return queries_; }
  std::int64_t flips() const { return flips_; }
  std::string labeler() const;

 private:
  bool flip_next();

  OracleSpec spec_;
  std::mt19937_64 rng_;
  std::int64_t queries_ = 0;
  std::int64_t flips_ = 0;
  std::unordered_set<std::int64_t> flip_slots_;
};

enum class SubmitStatus { accepted, not_found, conflict };

struct PendingQuery {
  std::int64_t query_id = -1;
  data::Segment seg_a;
  data::Segment seg_b;
  /// Rendered frames and per-step importance for each segment (UI payload).
  nlohmann::json payload;
};

struct HumanLabel {
  std::int64_t query_id = -1;
  data::PreferenceLabel label;
  std::int64_t timestamp_ms = 0;
};

/// Thread-safe hand-off between the training loop and the query API. Queries
/// are posted as immutable snapshots; each can be labelled at most once.
class HumanBridge {
 public:
  void post(PendingQuery query);
  std::vector<PendingQuery> pending() const;
  SubmitStatus submit(std::int64_t query_id, data::PreferenceLabel label, std::int64_t timestamp_ms);
  /// Labels received since the last drain, in arrival order, joined with their queries.
  std::vector<std::pair<PendingQuery, HumanLabel>> drain();
  /// Drops unlabelled queries; returns how many expired.
  std::size_t expire_pending();

 private:
  mutable std::mutex mutex_;
  std::map<std::int64_t, PendingQuery> open_;
  std::unordered_set<std::int64_t> answered_;
  std::vector<std::pair<PendingQuery, HumanLabel>> inbox_;
};

/// "a" -> (1,0), "b" -> (0,1), "equal" -> (0.5,0.5); nullopt otherwise.
std::optional<data::PreferenceLabel> label_from_choice(const std::string& choice);

}  // namespace oracle
PBRL_NAMESPACE_END
