#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "pbrl/reward/reward_model.hpp"
#include "pbrl/worldmodel/world_model.hpp"

PBRL_NAMESPACE_BEGIN
namespace credit {

enum class CreditKind { prior, rvar, nrp, bisim, none, prior_only };

struct CreditStrategy {
  CreditKind kind = CreditKind::none;
  Real lambda = 0;
  /// Discount for the bisimulation target.
  Real gamma = Real(0.99);

  /// "prior|rvar|nrp|bisim|none|prior-only"; lambda defaults depend on the
  /// environment (1000 keydoor, 5 pointmass, 1e6 for prior-only).
  static CreditStrategy parse(const std::string& method, const std::string& env);
  std::string name() const;
  bool needs_world_model() const;
  /// prior, rvar, nrp and prior-only fit per-step rewards to redistributed targets.
  bool redistributes() const;
};

std::string to_string(CreditKind kind);

/// Per-step weights over a segment; non-negative, summing to 1.
using ImportanceVector = std::vector<Real>;

/// alpha_t = (1/L) sum_l (attn_l[s_t] + attn_l[a_t]).
ImportanceVector importance_from_attention(const worldmodel::AttentionMap& map);

/// Redistribution of the predicted return G over T steps. alpha is ignored for rvar.
std::vector<Real> reward_targets(CreditKind kind, std::span<const Real> alpha, Real predicted_return, int steps);

/// Mean squared error between per-step rewards [1, T] (or [n, T]) and constant targets.
diff::Var prior_loss(diff::Tape& tape, diff::Var rewards, std::span<const Real> targets);
Real prior_loss(const reward::RewardMember& member, const data::Segment& segment, std::span<const Real> targets);

/// mean over pairs of (|z_i - z_j|_1 - |r_i - r_j| - gamma |z'_i - z'_j|_1)^2.
/// All inputs are [P, *] row-aligned pair members.
diff::Var bisim_loss(diff::Var z_i, diff::Var z_j, diff::Var r_i, diff::Var r_j, diff::Var next_i, diff::Var next_j,
                     Real gamma);

struct BisimOptions {
  int pairs = 256;
};

/// Importance of both segments of one triplet.
struct TripletImportance {
  ImportanceVector a;
  ImportanceVector b;
};

/// Importance for every triplet from the world model's attention.
std::vector<TripletImportance> triplet_importance(const worldmodel::WorldModel& world_model,
                                                  std::span<const data::PreferenceTriplet* const> batch);

/// Mean over the batch of L_CE + lambda * L_aux.
/// importance: aligned with batch; computed from world_model when empty.
/// rng: draws bisimulation pairs (bisim kind only).
/// ConfigError when the kind needs a world model and none is given.
diff::Var combined_loss(diff::Tape& tape, const reward::RewardMember& member,
                        std::span<const data::PreferenceTriplet* const> batch, const CreditStrategy& strategy,
                        const worldmodel::WorldModel* world_model,
                        std::span<const TripletImportance> importance = {}, std::mt19937_64* rng = nullptr,
                        BisimOptions bisim = {});

}  // namespace credit
PBRL_NAMESPACE_END
