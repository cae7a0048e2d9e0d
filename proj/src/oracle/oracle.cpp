#include "pbrl/oracle/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

PBRL_NAMESPACE_BEGIN
namespace oracle {

OracleSpec OracleSpec::parse(const std::string& text) {
  OracleSpec s;
  if (text == "perfect") {
    s.kind = OracleKind::perfect;
  } else if (text == "human") {
    s.kind = OracleKind::human;
  } else if (text.rfind("mistake:", 0) == 0) {
    s.kind = OracleKind::mistake;
    try {
      std::size_t used = 0;
      s.epsilon = static_cast<Real>(std::stod(text.substr(8), &used));
      if (used != text.size() - 8) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      throw ConfigError("bad mistake rate in oracle '" + text + "'");
    }
  } else {
    throw ConfigError("unknown oracle '" + text + "' (expected perfect|mistake:<epsilon>|human)");
  }
  s.validate();
  return s;
}

std::string OracleSpec::to_string() const {
  switch (kind) {
    case OracleKind::perfect: return "perfect";
    case OracleKind::human: return "human";
    case OracleKind::mistake: {
      std::ostringstream os;
      os << "mistake:" << epsilon;
      return os.str();
    }
  }
  return "perfect";
}

void OracleSpec::validate() const {
  if (!(epsilon >= 0 && epsilon <= 1)) throw ConfigError("oracle epsilon must lie in [0, 1]");
  if (!(equal_threshold >= 0)) throw ConfigError("oracle equal_threshold must be >= 0");
  if (fixed_fraction && budget < 0) throw ConfigError("fixed-fraction oracle needs a non-negative budget");
}

data::PreferenceLabel perfect_label(const data::Segment& a, const data::Segment& b, Real equal_threshold) {
  if (a.length() != b.length()) throw DataError("oracle segments differ in length");
  const Real ga = a.target_return(), gb = b.target_return();
  if (std::abs(ga - gb) <= equal_threshold) return data::PreferenceLabel::equal();
  return ga > gb ? data::PreferenceLabel::prefer_a() : data::PreferenceLabel::prefer_b();
}

SyntheticOracle::SyntheticOracle(OracleSpec spec) : spec_(spec), rng_(spec.seed) {
  spec_.validate();
  if (spec_.kind == OracleKind::human) throw ConfigError("human labels come through HumanBridge");
  if (spec_.kind == OracleKind::mistake && spec_.fixed_fraction) {
    const auto n = static_cast<std::size_t>(spec_.budget);
    const auto flips = static_cast<std::size_t>(std::lround(static_cast<double>(spec_.epsilon) * spec_.budget));
    std::vector<std::int64_t> slots(n);
    std::iota(slots.begin(), slots.end(), std::int64_t{0});
    std::shuffle(slots.begin(), slots.end(), rng_);
    flip_slots_.insert(slots.begin(), slots.begin() + static_cast<std::ptrdiff_t>(flips));
  }
}

bool SyntheticOracle::flip_next() {
  if (spec_.kind != OracleKind::mistake) return false;
  if (spec_.fixed_fraction) return flip_slots_.count(queries_) > 0;
  // One draw per query keeps the stream aligned regardless of label content.
  return std::bernoulli_distribution(spec_.epsilon)(rng_);
}

data::PreferenceLabel SyntheticOracle::label(const data::Segment& a, const data::Segment& b) {
  auto y = perfect_label(a, b, spec_.equal_threshold);
  const bool flip = flip_next();
  ++queries_;
  if (flip && !y.is_neutral()) {
    ++flips_;
    y = y.swapped();
  }
  return y;
}

data::PreferenceTriplet SyntheticOracle::triplet(data::Segment a, data::Segment b, std::int64_t timestamp,
                                                 std::int64_t query_id) {
  data::PreferenceTriplet t;
  t.label = label(a, b);
  t.seg_a = std::move(a);
  t.seg_b = std::move(b);
  t.labeler = labeler();
  t.timestamp = timestamp;
  t.query_id = query_id;
  return t;
}

std::string SyntheticOracle::labeler() const { return spec_.to_string(); }

void HumanBridge::post(PendingQuery query) {
  std::lock_guard lock(mutex_);
  open_.emplace(query.query_id, std::move(query));
}

std::vector<PendingQuery> HumanBridge::pending() const {
  std::lock_guard lock(mutex_);
  std::vector<PendingQuery> out;
  for (const auto& [id, q] : open_) out.push_back(q);
  return out;
}

SubmitStatus HumanBridge::submit(std::int64_t query_id, data::PreferenceLabel label, std::int64_t timestamp_ms) {
  std::lock_guard lock(mutex_);
  if (answered_.count(query_id)) return SubmitStatus::conflict;
  auto it = open_.find(query_id);
  if (it == open_.end()) return SubmitStatus::not_found;
  answered_.insert(query_id);
  inbox_.emplace_back(std::move(it->second), HumanLabel{query_id, label, timestamp_ms});
  open_.erase(it);
  return SubmitStatus::accepted;
}

std::vector<std::pair<PendingQuery, HumanLabel>> HumanBridge::drain() {
  std::lock_guard lock(mutex_);
  return std::exchange(inbox_, {});
}

std::size_t HumanBridge::expire_pending() {
  std::lock_guard lock(mutex_);
  const auto n = open_.size();
  open_.clear();
  return n;
}

std::optional<data::PreferenceLabel> label_from_choice(const std::string& choice) {
  if (choice == "a") return data::PreferenceLabel::prefer_a();
  if (choice == "b") return data::PreferenceLabel::prefer_b();
  if (choice == "equal") return data::PreferenceLabel::equal();
  return std::nullopt;
}

}  // namespace oracle
PBRL_NAMESPACE_END
