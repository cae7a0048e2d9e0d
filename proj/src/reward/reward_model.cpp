#include "pbrl/reward/reward_model.hpp"

#include <cmath>
#include <cstring>
#include <string_view>
#include <unordered_map>

PBRL_NAMESPACE_BEGIN
namespace reward {

namespace {

std::string_view row_bytes(const std::vector<Real>& data, std::size_t row, std::size_t width) {
  return {reinterpret_cast<const char*>(data.data() + row * width), width * sizeof(Real)};
}

nlohmann::json params_json(const diff::ConstParameterList& params) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto* p : params) j[p->name] = {{"shape", p->value.shape}, {"data", p->value.data}};
  return j;
}

}  // namespace

RewardMember::RewardMember(const RewardNetConfig& config, std::uint64_t seed, const std::string& name)
    : config_(config) {
  if (config.state_dim <= 0 || config.action_dim <= 0 || config.hidden <= 0 || config.hidden_layers <= 0) {
    throw ConfigError("reward network dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  std::vector<int> sizes{input_dim()};
  for (int i = 0; i < config.hidden_layers; ++i) sizes.push_back(config.hidden);
  body_ = diff::Mlp(name + ".body", sizes, config.activation, config.activation, rng);
  head_ = diff::Linear(name + ".head", config.hidden, 1, rng);
  next_head_ = diff::Linear(name + ".next_head", config.hidden, config.hidden, rng);
}

diff::ParameterList RewardMember::parameters() {
  diff::ParameterList out;
  body_.collect(out);
  head_.collect(out);
  next_head_.collect(out);
  return out;
}

diff::ConstParameterList RewardMember::parameters() const {
  diff::ConstParameterList out;
  body_.collect(out);
  head_.collect(out);
  next_head_.collect(out);
  return out;
}

std::vector<Real> RewardMember::evaluate_rows(const diff::Tensor& inputs) const {
  diff::Tensor h = head_.infer(body_.infer(inputs));
  diff::activate_inplace(h, diff::Activation::tanh);
  return {h.data.begin(), h.data.end()};
}

Real RewardMember::evaluate(const envs::Observation& s, const envs::Action& a) const {
  if (static_cast<int>(s.size()) != config_.state_dim || static_cast<int>(a.size()) != config_.action_dim) {
    throw ShapeError("reward input has the wrong state/action width");
  }
  std::vector<Real> row(s);
  row.insert(row.end(), a.begin(), a.end());
  return evaluate_rows(diff::Tensor({1, input_dim()}, std::move(row))).front();
}

diff::Var RewardMember::embed(diff::Tape& tape, diff::Var inputs) const { return body_.forward(tape, inputs); }

diff::Var RewardMember::reward_from_embedding(diff::Tape& tape, diff::Var z) const {
  return diff::tanh(head_.forward(tape, z));
}

diff::Var RewardMember::predict_next_embedding(diff::Tape& tape, diff::Var z) const {
  return next_head_.forward(tape, z);
}

diff::Var RewardMember::forward_rows(diff::Tape& tape, diff::Var inputs) const {
  return reward_from_embedding(tape, embed(tape, inputs));
}

SegmentForward RewardMember::forward_segments(diff::Tape& tape, std::span<const data::Segment* const> segments) const {
  if (segments.empty()) throw DataError("forward_segments: empty batch");
  const int length = segments.front()->length();
  const auto width = static_cast<std::size_t>(input_dim());
  std::vector<Real> unique;
  std::unordered_map<std::string_view, int> seen;
  std::vector<int> index;
  index.reserve(segments.size() * static_cast<std::size_t>(length));
  // Rows are staged in a scratch buffer so string_view keys stay valid.
  std::vector<Real> staged(segments.size() * static_cast<std::size_t>(length) * width);
  std::size_t row = 0;
  for (const auto* seg : segments) {
    if (seg->length() != length) throw ShapeError("forward_segments: segments differ in length");
    for (int t = 0; t < length; ++t, ++row) {
      const auto& s = seg->states[static_cast<std::size_t>(t)];
      const auto& a = seg->actions[static_cast<std::size_t>(t)];
      if (s.size() + a.size() != width) throw ShapeError("segment step has the wrong state/action width");
      Real* dst = staged.data() + row * width;
      std::copy(s.begin(), s.end(), dst);
      std::copy(a.begin(), a.end(), dst + s.size());
      auto [it, inserted] = seen.emplace(row_bytes(staged, row, width), static_cast<int>(seen.size()));
      if (inserted) unique.insert(unique.end(), dst, dst + width);
      index.push_back(it->second);
    }
  }
  const int u = static_cast<int>(seen.size());
  diff::Var inputs = tape.constant(diff::Tensor({u, input_dim()}, std::move(unique)));
  diff::Var z = embed(tape, inputs);
  diff::Var r = reward_from_embedding(tape, z);
  diff::Var per_step = diff::gather_rows(r, index);
  SegmentForward out;
  out.segments = static_cast<int>(segments.size());
  out.length = length;
  out.rewards = diff::reshape(per_step, out.segments, length);
  out.embeddings = z;
  out.row_index = std::move(index);
  return out;
}

nlohmann::json RewardMember::to_json() const {
  return {{"state_dim", config_.state_dim},
          {"action_dim", config_.action_dim},
          {"hidden", config_.hidden},
          {"hidden_layers", config_.hidden_layers},
          {"parameters", params_json(parameters())}};
}

void RewardMember::load_json(const nlohmann::json& j) {
  const auto& params = j.at("parameters");
  for (auto* p : parameters()) {
    auto values = params.at(p->name).at("data").get<std::vector<Real>>();
    if (values.size() != p->value.size()) throw DataError("checkpoint shape mismatch for " + p->name);
    p->value.data.assign(values.begin(), values.end());
  }
}

RewardEnsemble::RewardEnsemble(const RewardNetConfig& config, int members, std::uint64_t seed) {
  if (members < 1) throw ConfigError("reward ensemble needs at least one member");
  std::mt19937_64 seeder(seed);
  for (int i = 0; i < members; ++i) members_.emplace_back(config, seeder(), "reward" + std::to_string(i));
}

nlohmann::json RewardEnsemble::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& m : members_) j.push_back(m.to_json());
  return j;
}

diff::Tensor segment_inputs(const data::Segment& segment) {
  if (segment.states.empty()) throw DataError("empty segment");
  const int width = static_cast<int>(segment.states.front().size() + segment.actions.front().size());
  std::vector<Real> rows;
  rows.reserve(static_cast<std::size_t>(segment.length() * width));
  for (int t = 0; t < segment.length(); ++t) {
    rows.insert(rows.end(), segment.states[t].begin(), segment.states[t].end());
    rows.insert(rows.end(), segment.actions[t].begin(), segment.actions[t].end());
  }
  return diff::Tensor({segment.length(), width}, std::move(rows));
}

Real preference_from_returns(Real return_a, Real return_b) {
  // 1 / (1 + exp(b - a)), arranged so the exponent is never positive.
  const Real d = return_b - return_a;
  if (d <= 0) return Real(1) / (Real(1) + std::exp(d));
  const Real e = std::exp(-d);
  return e / (Real(1) + e);
}

Real preference_probability(const RewardMember& member, const data::Segment& seg_a, const data::Segment& seg_b) {
  if (seg_a.length() != seg_b.length()) throw ShapeError("preference over segments of different lengths");
  return preference_from_returns(predicted_return(member, seg_a), predicted_return(member, seg_b));
}

Real predicted_return(const RewardMember& member, const data::Segment& segment) {
  Real total = 0;
  for (int t = 0; t < segment.length(); ++t) total += member.evaluate(segment.states[t], segment.actions[t]);
  return total;
}

Real discounted_predicted_return(const RewardMember& member, const data::Segment& segment, Real gamma) {
  Real total = 0;
  Real weight = 1;
  for (int t = 0; t < segment.length(); ++t) {
    total += weight * member.evaluate(segment.states[t], segment.actions[t]);
    weight *= gamma;
  }
  return total;
}

Real ensemble_reward(const RewardEnsemble& ensemble, const envs::Observation& s, const envs::Action& a) {
  Real total = 0;
  for (const auto& m : ensemble.members()) total += m.evaluate(s, a);
  return total / static_cast<Real>(ensemble.size());
}

diff::Var ce_loss_from_returns(diff::Tape& tape, diff::Var returns_a, diff::Var returns_b,
                               std::span<const data::PreferenceLabel> labels) {
  const int n = returns_a.rows();
  if (n == 0 || returns_b.rows() != n || static_cast<int>(labels.size()) != n) {
    throw ShapeError("ce_loss: batch sizes disagree or batch is empty");
  }
  const std::array<diff::Var, 2> parts{returns_a, returns_b};
  diff::Var probs = diff::softmax_rows(diff::concat_cols(parts));
  diff::Var logp = diff::log(diff::clamp(probs, kProbabilityFloor, Real(1) - kProbabilityFloor));
  diff::Tensor y = diff::Tensor::zeros({n, 2});
  for (int i = 0; i < n; ++i) {
    y.at(i, 0) = labels[static_cast<std::size_t>(i)].a;
    y.at(i, 1) = labels[static_cast<std::size_t>(i)].b;
  }
  diff::Var weighted = diff::mul(tape.constant(std::move(y), "labels"), logp);
  return diff::scale(diff::sum(weighted), Real(-1) / static_cast<Real>(n));
}

diff::Var ce_loss(diff::Tape& tape, const RewardMember& member, std::span<const data::PreferenceTriplet* const> batch) {
  if (batch.empty()) throw DataError("ce_loss on an empty batch");
  std::vector<const data::Segment*> segs;
  std::vector<data::PreferenceLabel> labels;
  for (const auto* t : batch) segs.push_back(&t->seg_a);
  for (const auto* t : batch) segs.push_back(&t->seg_b);
  for (const auto* t : batch) labels.push_back(t->label);
  const auto fwd = member.forward_segments(tape, segs);
  diff::Var returns = diff::row_sum(fwd.rewards);
  const int n = static_cast<int>(batch.size());
  return ce_loss_from_returns(tape, diff::slice_rows(returns, 0, n), diff::slice_rows(returns, n, n), labels);
}

Real ce_loss(const RewardMember& member, std::span<const data::PreferenceTriplet> batch) {
  std::vector<const data::PreferenceTriplet*> ptrs;
  for (const auto& t : batch) ptrs.push_back(&t);
  diff::Tape tape;
  return ce_loss(tape, member, ptrs).item();
}

}  // namespace reward
PBRL_NAMESPACE_END
