#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pbrl/data/segment.hpp"
#include "pbrl/diff/nn.hpp"

PBRL_NAMESPACE_BEGIN
namespace reward {

struct RewardNetConfig {
  int state_dim = 0;
  int action_dim = 0;
  int hidden = 256;
  int hidden_layers = 3;
  diff::Activation activation = diff::Activation::silu;
};

/// Per-step rewards for a batch of equal-length segments recorded on a tape.
/// Identical (state, action) rows are evaluated once and gathered back.
struct SegmentForward {
  diff::Var rewards;          // [segments, length]
  diff::Var embeddings;       // [unique rows, hidden], penultimate layer
  std::vector<int> row_index; // segment-major step -> unique row
  int segments = 0;
  int length = 0;
};

/// One reward network: concat(state, action) -> hidden layers -> tanh scalar
/// in [-1, 1]. The last hidden activation doubles as an embedding, with an
/// extra head predicting the next-state embedding (used by the bisimulation
/// ablation only).
class RewardMember {
 public:
  RewardMember() = default;
  RewardMember(const RewardNetConfig& config, std::uint64_t seed, const std::string& name = "reward");

  const RewardNetConfig& config() const { return config_; }
  int input_dim() const { return config_.state_dim + config_.action_dim; }

  /// r(s, a) through the tape-free path.
  Real evaluate(const envs::Observation& s, const envs::Action& a) const;
  std::vector<Real> evaluate_rows(const diff::Tensor& inputs) const;

  SegmentForward forward_segments(diff::Tape& tape, std::span<const data::Segment* const> segments) const;
  /// inputs [k, state+action] -> rewards [k, 1]
  diff::Var forward_rows(diff::Tape& tape, diff::Var inputs) const;
  diff::Var embed(diff::Tape& tape, diff::Var inputs) const;
  diff::Var reward_from_embedding(diff::Tape& tape, diff::Var z) const;
  diff::Var predict_next_embedding(diff::Tape& tape, diff::Var z) const;

  diff::ParameterList parameters();
  diff::ConstParameterList parameters() const;

  nlohmann::json to_json() const;
  void load_json(const nlohmann::json& j);

 private:
  RewardNetConfig config_;
  diff::Mlp body_;
  diff::Linear head_;
  diff::Linear next_head_;
};

/// E independently initialised members. The policy-facing reward is their mean.
class RewardEnsemble {
 public:
  RewardEnsemble() = default;
  RewardEnsemble(const RewardNetConfig& config, int members, std::uint64_t seed);
  explicit RewardEnsemble(std::vector<RewardMember> members) : members_(std::move(members)) {}

  int size() const { return static_cast<int>(members_.size()); }
  RewardMember& member(int i) { return members_.at(static_cast<std::size_t>(i)); }
  const RewardMember& member(int i) const { return members_.at(static_cast<std::size_t>(i)); }
  std::vector<RewardMember>& members() { return members_; }
  const std::vector<RewardMember>& members() const { return members_; }

  nlohmann::json to_json() const;

 private:
  std::vector<RewardMember> members_;
};

/// Builds the [k, state+action] input matrix for one segment.
diff::Tensor segment_inputs(const data::Segment& segment);

/// P[a > b] from two return sums via a stable two-way softmax.
Real preference_from_returns(Real return_a, Real return_b);
Real preference_probability(const RewardMember& member, const data::Segment& seg_a, const data::Segment& seg_b);

/// Undiscounted sum of member rewards over the segment, summed in step order.
Real predicted_return(const RewardMember& member, const data::Segment& segment);
/// Discounted variant sum_t gamma^t r_t, exposed for the discounted-return config flag.
Real discounted_predicted_return(const RewardMember& member, const data::Segment& segment, Real gamma);

/// Mean of member outputs.
Real ensemble_reward(const RewardEnsemble& ensemble, const envs::Observation& s, const envs::Action& a);

inline constexpr Real kProbabilityFloor = Real(1e-7);

/// Bradley-Terry cross-entropy for a batch given per-segment return sums
/// ([n,1] each). Probabilities are clamped to [1e-7, 1 - 1e-7] before the log.
diff::Var ce_loss_from_returns(diff::Tape& tape, diff::Var returns_a, diff::Var returns_b,
                               std::span<const data::PreferenceLabel> labels);

/// Tape version of the cross-entropy objective over a triplet batch.
diff::Var ce_loss(diff::Tape& tape, const RewardMember& member, std::span<const data::PreferenceTriplet* const> batch);
/// Value of the cross-entropy objective.
Real ce_loss(const RewardMember& member, std::span<const data::PreferenceTriplet> batch);

}  // namespace reward
PBRL_NAMESPACE_END
