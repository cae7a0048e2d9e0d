#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "pbrl/data/replay.hpp"
#include "pbrl/diff/nn.hpp"
#include "pbrl/diff/optim.hpp"

PBRL_NAMESPACE_BEGIN
namespace worldmodel {

struct LatentConfig {
  int categoricals = 8;
  int classes = 8;
  int width() const { return categoricals * classes; }
};

struct Encoding {
  diff::Tensor logits;       // [n, C*V]
  std::vector<int> indices;  // [n * C], sampled or mode class per categorical
};

/// Observation encoder/decoder. Observations map to C categorical latents of
/// V classes each; the decoder reconstructs the observation from a one-hot
/// latent sample.
class ObservationModel {
 public:
  ObservationModel() = default;
  ObservationModel(int obs_dim, LatentConfig latent, int hidden, std::uint64_t seed);

  const LatentConfig& latent() const { return latent_; }
  int obs_dim() const { return obs_dim_; }

  diff::Var logits(diff::Tape& tape, diff::Var obs) const;
  diff::Var decode(diff::Tape& tape, diff::Var latent_one_hot) const;

  /// Logits plus class indices: sampled with rng, or the per-categorical mode
  /// when rng is null.
  Encoding encode(std::span<const envs::Observation> obs, std::mt19937_64* rng = nullptr) const;
  /// One-hot [n, C*V] rows for the mode latents; these are the dynamics inputs and targets.
  diff::Tensor mode_latents(std::span<const envs::Observation> obs) const;
  /// Reconstruction from the mode latents.
  diff::Tensor reconstruct(std::span<const envs::Observation> obs) const;

  /// Mean squared reconstruction error through a straight-through categorical sample.
  diff::Var reconstruction_loss(diff::Tape& tape, std::span<const envs::Observation> obs, std::mt19937_64& rng) const;

  diff::ParameterList parameters();
  diff::ConstParameterList parameters() const;

 private:
  int obs_dim_ = 0;
  LatentConfig latent_;
  diff::Mlp encoder_;
  diff::Mlp decoder_;
};

struct DynamicsConfig {
  LatentConfig latent;
  envs::ActionSpace action_space = envs::DiscreteSpace{4};
  int width = 64;
  int layers = 2;
  int heads = 2;
  /// Longest segment the position table covers (2 * max_steps tokens).
  int max_steps = 50;
};

/// Per layer, the head-averaged attention of the final query (token a_T)
/// over all 2T tokens s_1, a_1, ..., s_T, a_T.
struct AttentionMap {
  std::vector<std::vector<Real>> layers;
  int steps() const { return layers.empty() ? 0 : static_cast<int>(layers.front().size() / 2); }
};

struct DynamicsForward {
  diff::Var logits;  // [batch * T, C*V]; row (b, t) predicts z_{t+1} from token a_t
  std::vector<AttentionMap> attention;
};

/// Causal transformer over interleaved latent-state and action tokens with
/// learned absolute positions. Pre-norm blocks; no reward or discount heads.
class DynamicsModel {
 public:
  DynamicsModel() = default;
  DynamicsModel(DynamicsConfig config, std::uint64_t seed);

  const DynamicsConfig& config() const { return config_; }

  /// latents: one [T, C*V] tensor per segment; actions aligned per segment.
  DynamicsForward forward(diff::Tape& tape, std::span<const diff::Tensor> latents,
                          std::span<const std::vector<envs::Action>> actions) const;

  diff::ParameterList parameters();
  diff::ConstParameterList parameters() const;

 private:
  struct Block {
    diff::LayerNorm norm1, norm2;
    diff::Linear query, key, value, proj;
    diff::Mlp mlp;
  };

  diff::Var embed_actions(diff::Tape& tape, const std::vector<envs::Action>& actions) const;

  DynamicsConfig config_;
  diff::Linear state_embed_;
  diff::Linear action_linear_;
  diff::Embedding action_table_;
  diff::Embedding positions_;
  std::vector<Block> blocks_;
  diff::LayerNorm final_norm_;
  diff::Linear head_;
};

/// Cross-entropy between the encoder's one-hot next latent and the predicted
/// categorical distribution, summed over categoricals and averaged over
/// batch and the T-1 predicted steps. Targets carry no gradient.
diff::Var dynamics_loss(diff::Tape& tape, const DynamicsModel& dyn, const ObservationModel& obs,
                        std::span<const data::Segment* const> segments);
diff::Var dynamics_loss_from_latents(diff::Tape& tape, const DynamicsModel& dyn,
                                     std::span<const diff::Tensor> latents,
                                     std::span<const std::vector<envs::Action>> actions);

/// Attention of the final prediction position over the whole segment.
AttentionMap extract_attention(const DynamicsModel& dyn, const ObservationModel& obs, const data::Segment& segment);

struct WorldModelConfig {
  LatentConfig latent;
  int obs_hidden = 128;
  int width = 64;
  int layers = 2;
  int heads = 2;
  int segment_length = 50;
  int batch = 16;
  Real obs_lr = Real(1e-3);
  Real dyn_lr = Real(1e-3);
  /// Gradient steps per observation-model pretraining call and per dynamics update.
  int obs_steps = 500;
  int dyn_steps = 100;
};

/// Observation model, dynamics model and their optimisers. The observation
/// model is trained only until freeze_observation_model().
class WorldModel {
 public:
  WorldModel(int obs_dim, envs::ActionSpace action_space, WorldModelConfig config, std::uint64_t seed);

  /// Mean reconstruction loss of the last step; ConfigError once frozen.
  Real pretrain_observation_model(const data::ReplayBuffer& buffer);
  void freeze_observation_model() { frozen_ = true; }
  bool observation_model_frozen() const { return frozen_; }

  /// dyn_steps Adam steps on random length-l segments; returns the mean loss.
  Real train_dynamics(const data::ReplayBuffer& buffer);
  Real train_dynamics_on(std::span<const data::Segment* const> batch);

  AttentionMap attention(const data::Segment& segment) const { return extract_attention(dynamics_, observation_, segment); }

  const ObservationModel& observation() const { return observation_; }
  const DynamicsModel& dynamics() const { return dynamics_; }
  ObservationModel& observation() { return observation_; }
  DynamicsModel& dynamics() { return dynamics_; }
  const WorldModelConfig& config() const { return config_; }
  std::int64_t dynamics_updates() const { return dyn_opt_.steps(); }

 private:
  std::vector<data::Segment> sample_segments(const data::ReplayBuffer& buffer, int count);

  WorldModelConfig config_;
  ObservationModel observation_;
  DynamicsModel dynamics_;
  diff::Adam obs_opt_;
  diff::Adam dyn_opt_;
  std::mt19937_64 rng_;
  bool frozen_ = false;
};

}  // namespace worldmodel
PBRL_NAMESPACE_END
