#include "pbrl/credit/credit.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

PBRL_NAMESPACE_BEGIN
namespace credit {

std::string to_string(CreditKind kind) {
  switch (kind) {
    case CreditKind::prior: return "prior";
    case CreditKind::rvar: return "rvar";
    case CreditKind::nrp: return "nrp";
    case CreditKind::bisim: return "bisim";
    case CreditKind::none: return "none";
    case CreditKind::prior_only: return "prior-only";
  }
  return "none";
}

CreditStrategy CreditStrategy::parse(const std::string& method, const std::string& env) {
  CreditStrategy s;
  if (method == "prior") {
    s.kind = CreditKind::prior;
  } else if (method == "rvar") {
    s.kind = CreditKind::rvar;
  } else if (method == "nrp") {
    s.kind = CreditKind::nrp;
  } else if (method == "bisim") {
    s.kind = CreditKind::bisim;
  } else if (method == "none") {
    s.kind = CreditKind::none;
  } else if (method == "prior-only" || method == "prior_only") {
    s.kind = CreditKind::prior_only;
  } else {
    throw ConfigError("unknown method '" + method + "' (expected prior|rvar|nrp|bisim|none|prior-only)");
  }
  const Real env_lambda = env == "pointmass" ? Real(5) : Real(1000);
  s.lambda = s.kind == CreditKind::none ? Real(0) : s.kind == CreditKind::prior_only ? Real(1e6) : env_lambda;
  return s;
}

std::string CreditStrategy::name() const { return to_string(kind); }

bool CreditStrategy::needs_world_model() const {
  return kind == CreditKind::prior || kind == CreditKind::nrp || kind == CreditKind::bisim ||
         kind == CreditKind::prior_only;
}

bool CreditStrategy::redistributes() const {
  return kind == CreditKind::prior || kind == CreditKind::rvar || kind == CreditKind::nrp ||
         kind == CreditKind::prior_only;
}

ImportanceVector importance_from_attention(const worldmodel::AttentionMap& map) {
  if (map.layers.empty()) throw ShapeError("attention map has no layers");
  const auto tokens = map.layers.front().size();
  if (tokens == 0 || tokens % 2 != 0) throw ShapeError("attention map must cover 2T tokens");
  const std::size_t steps = tokens / 2;
  ImportanceVector alpha(steps, 0);
  // Running mean over layers: identical layers reproduce their value exactly.
  Real k = 0;
  for (const auto& layer : map.layers) {
    if (layer.size() != tokens) throw ShapeError("attention layers differ in length");
    k += 1;
    for (std::size_t t = 0; t < steps; ++t) alpha[t] += (layer[2 * t] + layer[2 * t + 1] - alpha[t]) / k;
  }
  return alpha;
}

std::vector<Real> reward_targets(CreditKind kind, std::span<const Real> alpha, Real predicted_return, int steps) {
  if (steps < 1) throw ConfigError("reward_targets needs T >= 1");
  std::vector<Real> weights(static_cast<std::size_t>(steps));
  switch (kind) {
    case CreditKind::rvar:
      std::fill(weights.begin(), weights.end(), Real(1) / static_cast<Real>(steps));
      break;
    case CreditKind::prior:
    case CreditKind::prior_only:
      if (static_cast<int>(alpha.size()) != steps) throw ShapeError("importance length differs from T");
      std::copy(alpha.begin(), alpha.end(), weights.begin());
      break;
    case CreditKind::nrp: {
      if (static_cast<int>(alpha.size()) != steps) throw ShapeError("importance length differs from T");
      const auto [lo, hi] = std::minmax_element(alpha.begin(), alpha.end());
      if (!(*hi > *lo)) {
        spdlog::debug("nrp: constant importance, using uniform weights");
        std::fill(weights.begin(), weights.end(), Real(1) / static_cast<Real>(steps));
        break;
      }
      // Normalised values lie in [0, 1], so exp cannot overflow.
      double total = 0;
      for (int t = 0; t < steps; ++t) {
        const double e = std::exp(static_cast<double>((alpha[t] - *lo) / (*hi - *lo)));
        weights[static_cast<std::size_t>(t)] = static_cast<Real>(e);
        total += e;
      }
      for (auto& w : weights) w = static_cast<Real>(w / total);
      break;
    }
    case CreditKind::bisim:
    case CreditKind::none:
      throw ConfigError("method " + to_string(kind) + " has no reward targets");
  }
  std::vector<Real> out(weights.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = weights[t] * predicted_return;
  return out;
}

diff::Var prior_loss(diff::Tape& tape, diff::Var rewards, std::span<const Real> targets) {
  if (static_cast<std::size_t>(rewards.rows()) * rewards.cols() != targets.size()) {
    throw ShapeError("prior_loss: targets do not match the reward shape");
  }
  diff::Var y = tape.constant(diff::Tensor({rewards.rows(), rewards.cols()}, std::vector<Real>(targets.begin(), targets.end())), "targets");
  return diff::mean(diff::square(diff::sub(rewards, y)));
}

Real prior_loss(const reward::RewardMember& member, const data::Segment& segment, std::span<const Real> targets) {
  diff::Tape tape;
  const std::array<const data::Segment*, 1> one{&segment};
  return prior_loss(tape, member.forward_segments(tape, one).rewards, targets).item();
}

diff::Var bisim_loss(diff::Var z_i, diff::Var z_j, diff::Var r_i, diff::Var r_j, diff::Var next_i, diff::Var next_j,
                     Real gamma) {
  diff::Var dz = diff::row_sum(diff::abs(diff::sub(z_i, z_j)));
  diff::Var dr = diff::abs(diff::sub(r_i, r_j));
  diff::Var dn = diff::scale(diff::row_sum(diff::abs(diff::sub(next_i, next_j))), gamma);
  return diff::mean(diff::square(diff::sub(diff::sub(dz, dr), dn)));
}

std::vector<TripletImportance> triplet_importance(const worldmodel::WorldModel& world_model,
                                                  std::span<const data::PreferenceTriplet* const> batch) {
  std::vector<TripletImportance> out;
  out.reserve(batch.size());
  for (const auto* t : batch) {
    out.push_back({importance_from_attention(world_model.attention(t->seg_a)),
                   importance_from_attention(world_model.attention(t->seg_b))});
  }
  return out;
}

namespace {

/// Bisimulation term on random step pairs plus a regression of the next-embedding
/// head onto the following step's embedding. Rewards and next embeddings are
/// treated as targets.
diff::Var bisim_term(diff::Tape& tape, const reward::RewardMember& member, const reward::SegmentForward& fwd,
                     Real gamma, std::mt19937_64& rng, int pairs) {
  const int steps = fwd.segments * fwd.length;
  std::uniform_int_distribution<int> pick(0, steps - 1);
  std::vector<int> zi, zj, ri, rj;
  for (int p = 0; p < pairs; ++p) {
    const int a = pick(rng), b = pick(rng);
    zi.push_back(fwd.row_index[static_cast<std::size_t>(a)]);
    zj.push_back(fwd.row_index[static_cast<std::size_t>(b)]);
    ri.push_back(a);
    rj.push_back(b);
  }
  diff::Var next = member.predict_next_embedding(tape, fwd.embeddings);
  diff::Var next_const = diff::stop_gradient(next);
  diff::Var r_flat = diff::stop_gradient(diff::reshape(fwd.rewards, steps, 1));
  diff::Var metric = bisim_loss(diff::gather_rows(fwd.embeddings, zi), diff::gather_rows(fwd.embeddings, zj),
                                diff::gather_rows(r_flat, ri), diff::gather_rows(r_flat, rj),
                                diff::gather_rows(next_const, zi), diff::gather_rows(next_const, zj), gamma);

  std::vector<int> now, later;
  for (int s = 0; s < fwd.segments; ++s) {
    for (int t = 0; t + 1 < fwd.length; ++t) {
      now.push_back(fwd.row_index[static_cast<std::size_t>(s * fwd.length + t)]);
      later.push_back(fwd.row_index[static_cast<std::size_t>(s * fwd.length + t + 1)]);
    }
  }
  if (now.empty()) return metric;
  diff::Var transition = diff::mean(diff::square(
      diff::sub(diff::gather_rows(next, now), diff::stop_gradient(diff::gather_rows(fwd.embeddings, later)))));
  return diff::add(metric, transition);
}

}  // namespace

diff::Var combined_loss(diff::Tape& tape, const reward::RewardMember& member,
                        std::span<const data::PreferenceTriplet* const> batch, const CreditStrategy& strategy,
                        const worldmodel::WorldModel* world_model, std::span<const TripletImportance> importance,
                        std::mt19937_64* rng, BisimOptions bisim) {
  if (batch.empty()) throw DataError("combined_loss on an empty batch");
  if (strategy.needs_world_model() && world_model == nullptr) {
    throw ConfigError("method " + strategy.name() + " needs a world model");
  }
  const int n = static_cast<int>(batch.size());
  std::vector<const data::Segment*> segs;
  std::vector<data::PreferenceLabel> labels;
  for (const auto* t : batch) segs.push_back(&t->seg_a);
  for (const auto* t : batch) segs.push_back(&t->seg_b);
  for (const auto* t : batch) labels.push_back(t->label);
  const auto fwd = member.forward_segments(tape, segs);
  diff::Var returns = diff::row_sum(fwd.rewards);
  diff::Var ce = reward::ce_loss_from_returns(tape, diff::slice_rows(returns, 0, n), diff::slice_rows(returns, n, n), labels);
  if (strategy.kind == CreditKind::none || strategy.lambda == 0) return ce;

  diff::Var aux;
  if (strategy.redistributes()) {
    std::vector<TripletImportance> computed;
    if (strategy.kind != CreditKind::rvar && importance.empty()) {
      computed = triplet_importance(*world_model, batch);
      importance = computed;
    }
    if (strategy.kind != CreditKind::rvar && static_cast<int>(importance.size()) != n) {
      throw ShapeError("importance does not align with the batch");
    }
    const int steps = fwd.length;
    std::vector<Real> targets;
    targets.reserve(static_cast<std::size_t>(2 * n * steps));
    for (int s = 0; s < 2 * n; ++s) {
      // Targets are constants: G and alpha are read off current values.
      const Real g = returns.value().data[static_cast<std::size_t>(s)];
      std::span<const Real> alpha;
      if (strategy.kind != CreditKind::rvar) {
        const auto& imp = importance[static_cast<std::size_t>(s % n)];
        alpha = s < n ? std::span<const Real>(imp.a) : std::span<const Real>(imp.b);
      }
      const auto t = reward_targets(strategy.kind, alpha, g, steps);
      targets.insert(targets.end(), t.begin(), t.end());
    }
    // Per triplet the auxiliary term is the sum of both segments' MSE; the
    // batch mean of that equals 2 * (mean over all 2n segments).
    aux = diff::scale(prior_loss(tape, fwd.rewards, targets), Real(2));
  } else {
    if (rng == nullptr) throw ConfigError("bisim needs a random generator for pair sampling");
    aux = bisim_term(tape, member, fwd, strategy.gamma, *rng, bisim.pairs);
  }
  return diff::add(ce, diff::scale(aux, strategy.lambda));
}

}  // namespace credit
PBRL_NAMESPACE_END
