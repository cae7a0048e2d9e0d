#include "pbrl/worldmodel/world_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

PBRL_NAMESPACE_BEGIN
namespace worldmodel {

namespace {

diff::Tensor stack_rows(std::span<const envs::Observation> obs) {
  if (obs.empty()) throw DataError("no observations to encode");
  const int dim = static_cast<int>(obs.front().size());
  std::vector<Real> data;
  data.reserve(obs.size() * static_cast<std::size_t>(dim));
  for (const auto& o : obs) {
    if (static_cast<int>(o.size()) != dim) throw ShapeError("observations differ in width");
    data.insert(data.end(), o.begin(), o.end());
  }
  return diff::Tensor({static_cast<int>(obs.size()), dim}, std::move(data));
}

int argmax(const Real* p, int n) {
  return static_cast<int>(std::max_element(p, p + n) - p);
}

diff::Tensor one_hot_rows(const std::vector<int>& indices, int rows, const LatentConfig& latent) {
  diff::Tensor out = diff::Tensor::zeros({rows, latent.width()});
  for (std::size_t i = 0; i < indices.size(); ++i) out.data[i * static_cast<std::size_t>(latent.classes) + indices[i]] = 1;
  return out;
}

}  // namespace

ObservationModel::ObservationModel(int obs_dim, LatentConfig latent, int hidden, std::uint64_t seed)
    : obs_dim_(obs_dim), latent_(latent) {
  if (obs_dim <= 0 || hidden <= 0 || latent.categoricals <= 0 || latent.classes < 2) {
    throw ConfigError("observation model dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  encoder_ = diff::Mlp("obs.encoder", {obs_dim, hidden, hidden, latent.width()}, diff::Activation::silu,
                       diff::Activation::none, rng);
  decoder_ = diff::Mlp("obs.decoder", {latent.width(), hidden, hidden, obs_dim}, diff::Activation::silu,
                       diff::Activation::none, rng);
}

diff::Var ObservationModel::logits(diff::Tape& tape, diff::Var obs) const { return encoder_.forward(tape, obs); }

diff::Var ObservationModel::decode(diff::Tape& tape, diff::Var latent_one_hot) const {
  return decoder_.forward(tape, latent_one_hot);
}

Encoding ObservationModel::encode(std::span<const envs::Observation> obs, std::mt19937_64* rng) const {
  Encoding e;
  e.logits = encoder_.infer(stack_rows(obs));
  const int groups = e.logits.rows() * latent_.categoricals;
  e.indices.resize(static_cast<std::size_t>(groups));
  std::vector<double> probs(static_cast<std::size_t>(latent_.classes));
  for (int g = 0; g < groups; ++g) {
    const Real* z = e.logits.data.data() + static_cast<std::size_t>(g) * latent_.classes;
    if (rng == nullptr) {
      e.indices[static_cast<std::size_t>(g)] = argmax(z, latent_.classes);
      continue;
    }
    const Real mx = *std::max_element(z, z + latent_.classes);
    for (int c = 0; c < latent_.classes; ++c) probs[static_cast<std::size_t>(c)] = std::exp(static_cast<double>(z[c] - mx));
    e.indices[static_cast<std::size_t>(g)] = std::discrete_distribution<int>(probs.begin(), probs.end())(*rng);
  }
  return e;
}

diff::Tensor ObservationModel::mode_latents(std::span<const envs::Observation> obs) const {
  return one_hot_rows(encode(obs).indices, static_cast<int>(obs.size()), latent_);
}

diff::Tensor ObservationModel::reconstruct(std::span<const envs::Observation> obs) const {
  return decoder_.infer(mode_latents(obs));
}

diff::Var ObservationModel::reconstruction_loss(diff::Tape& tape, std::span<const envs::Observation> obs,
                                                std::mt19937_64& rng) const {
  const diff::Tensor x = stack_rows(obs);
  const int n = x.rows();
  diff::Var target = tape.constant(x, "observation");
  diff::Var z = logits(tape, target);
  diff::Var probs = diff::softmax_rows(diff::reshape(z, n * latent_.categoricals, latent_.classes));
  std::vector<int> picks(static_cast<std::size_t>(n * latent_.categoricals));
  std::vector<double> p(static_cast<std::size_t>(latent_.classes));
  for (std::size_t g = 0; g < picks.size(); ++g) {
    const Real* row = probs.value().data.data() + g * static_cast<std::size_t>(latent_.classes);
    p.assign(row, row + latent_.classes);
    picks[g] = std::discrete_distribution<int>(p.begin(), p.end())(rng);
  }
  // Straight-through: the forward value is the one-hot sample, the gradient
  // flows through the probabilities.
  diff::Var sample = diff::add(tape.constant(one_hot_rows(picks, n, latent_)),
                               diff::reshape(diff::sub(probs, diff::stop_gradient(probs)), n, latent_.width()));
  diff::Var recon = decode(tape, sample);
  return diff::mean(diff::square(diff::sub(recon, target)));
}

diff::ParameterList ObservationModel::parameters() {
  diff::ParameterList out;
  encoder_.collect(out);
  decoder_.collect(out);
  return out;
}

diff::ConstParameterList ObservationModel::parameters() const {
  diff::ConstParameterList out;
  encoder_.collect(out);
  decoder_.collect(out);
  return out;
}

DynamicsModel::DynamicsModel(DynamicsConfig config, std::uint64_t seed) : config_(std::move(config)) {
  const int w = config_.width;
  if (config_.layers < 1 || config_.heads < 1 || w % config_.heads != 0 || config_.max_steps < 2) {
    throw ConfigError("dynamics model needs layers >= 1, width divisible by heads, and at least 2 steps");
  }
  std::mt19937_64 rng(seed);
  state_embed_ = diff::Linear("dyn.state_embed", config_.latent.width(), w, rng);
  if (envs::is_discrete(config_.action_space)) {
    action_table_ = diff::Embedding("dyn.action_embed", envs::action_dim(config_.action_space), w, rng);
  } else {
    action_linear_ = diff::Linear("dyn.action_embed", envs::action_dim(config_.action_space), w, rng);
  }
  positions_ = diff::Embedding("dyn.position", 2 * config_.max_steps, w, rng);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "dyn.block" + std::to_string(l);
    Block b;
    b.norm1 = diff::LayerNorm(p + ".norm1", w);
    b.norm2 = diff::LayerNorm(p + ".norm2", w);
    b.query = diff::Linear(p + ".query", w, w, rng);
    // Softmax is invariant to a key bias, so the key projection has none.
    b.key = diff::Linear(p + ".key", w, w, rng, false);
    b.value = diff::Linear(p + ".value", w, w, rng);
    b.proj = diff::Linear(p + ".proj", w, w, rng);
    b.mlp = diff::Mlp(p + ".mlp", {w, 2 * w, w}, diff::Activation::silu, diff::Activation::none, rng);
    blocks_.push_back(std::move(b));
  }
  final_norm_ = diff::LayerNorm("dyn.final_norm", w);
  head_ = diff::Linear("dyn.head", w, config_.latent.width(), rng);
}

diff::Var DynamicsModel::embed_actions(diff::Tape& tape, const std::vector<envs::Action>& actions) const {
  if (envs::is_discrete(config_.action_space)) {
    std::vector<int> idx;
    idx.reserve(actions.size());
    for (const auto& a : actions) idx.push_back(envs::action_index(a));
    return action_table_.forward(tape, idx);
  }
  const int dim = envs::action_dim(config_.action_space);
  std::vector<Real> flat;
  for (const auto& a : actions) {
    if (static_cast<int>(a.size()) != dim) throw ShapeError("action width does not match the dynamics model");
    flat.insert(flat.end(), a.begin(), a.end());
  }
  return action_linear_.forward(tape, tape.constant(diff::Tensor({static_cast<int>(actions.size()), dim}, std::move(flat))));
}

DynamicsForward DynamicsModel::forward(diff::Tape& tape, std::span<const diff::Tensor> latents,
                                       std::span<const std::vector<envs::Action>> actions) const {
  if (latents.empty() || latents.size() != actions.size()) throw ShapeError("dynamics batch is empty or misaligned");
  const int batch = static_cast<int>(latents.size());
  const int steps = latents.front().rows();
  const int tokens = 2 * steps;
  if (steps > config_.max_steps) throw ShapeError("segment longer than the dynamics position table");

  std::vector<int> interleave(static_cast<std::size_t>(tokens));
  for (int r = 0; r < tokens; ++r) interleave[static_cast<std::size_t>(r)] = (r % 2 == 0) ? r / 2 : steps + r / 2;
  std::vector<int> pos(static_cast<std::size_t>(tokens));
  std::iota(pos.begin(), pos.end(), 0);
  diff::Var position = positions_.forward(tape, pos);

  std::vector<diff::Var> seqs;
  for (int b = 0; b < batch; ++b) {
    const auto& z = latents[static_cast<std::size_t>(b)];
    if (z.rows() != steps || z.cols() != config_.latent.width()) throw ShapeError("latent batch has ragged shapes");
    if (static_cast<int>(actions[static_cast<std::size_t>(b)].size()) != steps) throw ShapeError("actions misaligned");
    const std::array<diff::Var, 2> parts{state_embed_.forward(tape, tape.constant(z, "latent")),
                                         embed_actions(tape, actions[static_cast<std::size_t>(b)])};
    seqs.push_back(diff::add(diff::gather_rows(diff::concat_rows(parts), interleave), position));
  }
  diff::Var x = diff::concat_rows(seqs);

  DynamicsForward out;
  out.attention.resize(static_cast<std::size_t>(batch));
  const int heads = config_.heads;
  for (const auto& blk : blocks_) {
    diff::Var h = blk.norm1.forward(tape, x);
    diff::Var q = blk.query.forward(tape, h), k = blk.key.forward(tape, h), v = blk.value.forward(tape, h);
    std::vector<diff::Var> mixed;
    for (int b = 0; b < batch; ++b) {
      auto att = diff::multi_head_attention(diff::slice_rows(q, b * tokens, tokens), diff::slice_rows(k, b * tokens, tokens),
                                            diff::slice_rows(v, b * tokens, tokens), heads, true);
      mixed.push_back(att.output);
      std::vector<Real> last(static_cast<std::size_t>(tokens), 0);
      for (int hd = 0; hd < heads; ++hd) {
        const Real* row = att.weights.data.data() + (static_cast<std::size_t>(hd) * tokens + tokens - 1) * tokens;
        for (int j = 0; j < tokens; ++j) last[static_cast<std::size_t>(j)] += row[j] / static_cast<Real>(heads);
      }
      out.attention[static_cast<std::size_t>(b)].layers.push_back(std::move(last));
    }
    x = diff::add(x, blk.proj.forward(tape, diff::concat_rows(mixed)));
    x = diff::add(x, blk.mlp.forward(tape, blk.norm2.forward(tape, x)));
  }
  std::vector<int> action_rows;
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < steps; ++t) action_rows.push_back(b * tokens + 2 * t + 1);
  }
  out.logits = head_.forward(tape, diff::gather_rows(final_norm_.forward(tape, x), action_rows));
  return out;
}

diff::ParameterList DynamicsModel::parameters() {
  diff::ParameterList out;
  state_embed_.collect(out);
  if (envs::is_discrete(config_.action_space)) {
    action_table_.collect(out);
  } else {
    action_linear_.collect(out);
  }
  positions_.collect(out);
  for (auto& b : blocks_) {
    b.norm1.collect(out);
    b.query.collect(out);
    b.key.collect(out);
    b.value.collect(out);
    b.proj.collect(out);
    b.norm2.collect(out);
    b.mlp.collect(out);
  }
  final_norm_.collect(out);
  head_.collect(out);
  return out;
}

diff::ConstParameterList DynamicsModel::parameters() const {
  auto list = const_cast<DynamicsModel*>(this)->parameters();
  return diff::as_const(list);
}

diff::Var dynamics_loss_from_latents(diff::Tape& tape, const DynamicsModel& dyn, std::span<const diff::Tensor> latents,
                                     std::span<const std::vector<envs::Action>> actions) {
  const int steps = latents.front().rows();
  if (steps < 2) throw DataError("dynamics loss needs segments of at least 2 steps");
  const auto fwd = dyn.forward(tape, latents, actions);
  const int batch = static_cast<int>(latents.size());
  const auto& lat = dyn.config().latent;
  std::vector<int> rows;
  std::vector<Real> target;
  for (int b = 0; b < batch; ++b) {
    const auto& z = latents[static_cast<std::size_t>(b)];
    for (int t = 0; t + 1 < steps; ++t) {
      rows.push_back(b * steps + t);
      const Real* next = z.data.data() + static_cast<std::size_t>(t + 1) * lat.width();
      target.insert(target.end(), next, next + lat.width());
    }
  }
  const int n = static_cast<int>(rows.size());
  diff::Var logp = diff::log_softmax_rows(diff::reshape(diff::gather_rows(fwd.logits, rows), n * lat.categoricals, lat.classes));
  diff::Var y = tape.constant(diff::Tensor({n * lat.categoricals, lat.classes}, std::move(target)), "next_latent");
  return diff::scale(diff::sum(diff::mul(y, logp)), Real(-1) / static_cast<Real>(n));
}

diff::Var dynamics_loss(diff::Tape& tape, const DynamicsModel& dyn, const ObservationModel& obs,
                        std::span<const data::Segment* const> segments) {
  std::vector<diff::Tensor> latents;
  std::vector<std::vector<envs::Action>> actions;
  for (const auto* s : segments) {
    latents.push_back(obs.mode_latents(s->states));
    actions.push_back(s->actions);
  }
  return dynamics_loss_from_latents(tape, dyn, latents, actions);
}

AttentionMap extract_attention(const DynamicsModel& dyn, const ObservationModel& obs, const data::Segment& segment) {
  diff::Tape tape;
  const std::array<diff::Tensor, 1> z{obs.mode_latents(segment.states)};
  const std::array<std::vector<envs::Action>, 1> a{segment.actions};
  return std::move(dyn.forward(tape, z, a).attention.front());
}

WorldModel::WorldModel(int obs_dim, envs::ActionSpace action_space, WorldModelConfig config, std::uint64_t seed)
    : config_(config), rng_(seed) {
  observation_ = ObservationModel(obs_dim, config.latent, config.obs_hidden, rng_());
  DynamicsConfig dc;
  dc.latent = config.latent;
  dc.action_space = action_space;
  dc.width = config.width;
  dc.layers = config.layers;
  dc.heads = config.heads;
  dc.max_steps = config.segment_length;
  dynamics_ = DynamicsModel(dc, rng_());
  obs_opt_ = diff::Adam(observation_.parameters(), diff::AdamConfig{.lr = config.obs_lr});
  dyn_opt_ = diff::Adam(dynamics_.parameters(), diff::AdamConfig{.lr = config.dyn_lr, .max_grad_norm = 1});
}

Real WorldModel::pretrain_observation_model(const data::ReplayBuffer& buffer) {
  if (frozen_) throw ConfigError("observation model is frozen");
  if (buffer.empty()) throw DataError("observation pretraining needs stored transitions");
  const auto params = observation_.parameters();
  Real last = 0;
  const auto batch = static_cast<std::size_t>(config_.batch * 4);
  for (int s = 0; s < config_.obs_steps; ++s) {
    std::vector<envs::Observation> obs;
    for (auto i : buffer.sample_indices(batch, rng_)) obs.push_back(buffer.at(i).state);
    last = diff::train_step(params, obs_opt_, [&](diff::Tape& t) { return observation_.reconstruction_loss(t, obs, rng_); });
  }
  return last;
}

std::vector<data::Segment> WorldModel::sample_segments(const data::ReplayBuffer& buffer, int count) {
  std::vector<std::size_t> starts;
  for (const auto& ep : buffer.episodes()) {
    for (int o = 0; o + config_.segment_length <= ep.length; ++o) starts.push_back(ep.begin + static_cast<std::size_t>(o));
  }
  if (starts.empty()) throw DataError("no episode long enough for dynamics training");
  std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
  std::vector<data::Segment> out;
  for (int i = 0; i < count; ++i) out.push_back(buffer.segment(starts[pick(rng_)], config_.segment_length));
  return out;
}

Real WorldModel::train_dynamics_on(std::span<const data::Segment* const> batch) {
  const auto params = dynamics_.parameters();
  return diff::train_step(params, dyn_opt_,
                          [&](diff::Tape& t) { return dynamics_loss(t, dynamics_, observation_, batch); });
}

Real WorldModel::train_dynamics(const data::ReplayBuffer& buffer) {
  double total = 0;
  for (int s = 0; s < config_.dyn_steps; ++s) {
    const auto segs = sample_segments(buffer, config_.batch);
    std::vector<const data::Segment*> ptrs;
    for (const auto& seg : segs) ptrs.push_back(&seg);
    total += train_dynamics_on(ptrs);
  }
  return static_cast<Real>(total / std::max(1, config_.dyn_steps));
}

}  // namespace worldmodel
PBRL_NAMESPACE_END
