#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "pbrl/agent/dqn.hpp"
#include "pbrl/credit/credit.hpp"
#include "pbrl/data/replay.hpp"
#include "pbrl/envs/env.hpp"
#include "pbrl/oracle/oracle.hpp"
#include "pbrl/reward/reward_model.hpp"
#include "pbrl/runner/config.hpp"
#include "pbrl/runner/metrics.hpp"
#include "pbrl/worldmodel/world_model.hpp"

PBRL_NAMESPACE_BEGIN
namespace runner {

struct SessionRecord {
  int index = 0;
  std::int64_t step = 0;
  int new_labels = 0;
  int total_labels = 0;
  /// Mean over members of the last training loss.
  double reward_loss = 0;
  /// Ensemble agreement with the new labels before training on them.
  double label_accuracy = 0;
};

struct RunRecord {
  RunConfig config;
  std::vector<EvalRow> evals;
  std::vector<SessionRecord> sessions;
  std::string preferences_path;
  int checkpoints = 0;
  std::int64_t labeled = 0;
  std::int64_t world_model_updates = 0;
  double last_dynamics_loss = 0;

  double mean_eval_success() const;
  double mean_eval_return() const;
};

/// Renders an observation as a UI frame by restoring it into a copy of env.
nlohmann::json render_observation(const envs::Environment& env, const envs::Observation& obs);

/// One PbRL run. With an empty run directory nothing is written to disk.
class Trainer {
 public:
  Trainer(RunConfig config, std::string run_dir = {});
  ~Trainer();

  RunRecord run();

  oracle::HumanBridge& bridge() { return bridge_; }
  /// Header plus every metrics row written so far; safe to call from another thread.
  std::string metrics_snapshot() const;

  /// Called at every session boundary before labels are collected (tests use
  /// it to answer human queries).
  std::function<void(Trainer&, int session)> before_session;
  /// Called after each evaluation with the new rows.
  std::function<void(const std::vector<EvalRow>&)> on_eval;

  const data::ReplayBuffer& buffer() const { return buffer_; }
  const reward::RewardEnsemble& ensemble() const { return ensemble_; }
  const worldmodel::WorldModel* world_model() const { return world_model_.get(); }
  const data::PreferenceDataset& dataset() const { return dataset_; }

 private:
  struct Streams;

  void evaluate(std::int64_t step, RunRecord& record);
  void session(std::int64_t step, RunRecord& record);
  void train_reward(std::int64_t step, SessionRecord& s);
  std::vector<data::PreferenceTriplet> synthetic_labels(std::int64_t step, int count);
  std::vector<data::PreferenceTriplet> human_labels(std::int64_t step, int count);
  void post_human_queries(const std::vector<data::SegmentPair>& pairs);
  nlohmann::json query_payload(const data::Segment& a, const data::Segment& b) const;
  std::vector<Real> importance(const data::Segment& s) const;
  Real reward_label(const envs::Observation& s, const envs::Action& a) const;
  int action_count() const;
  envs::Action to_env_action(int id) const;
  void write_file(const std::string& rel, const std::string& text) const;
  void append_metrics(const std::vector<EvalRow>& rows);

  RunConfig config_;
  std::string dir_;
  credit::CreditStrategy strategy_;
  std::unique_ptr<envs::Environment> env_;
  std::unique_ptr<envs::Environment> eval_env_;
  std::unique_ptr<Streams> rng_;
  data::ReplayBuffer buffer_;
  agent::DqnAgent agent_;
  agent::VisitCounts counts_;
  reward::RewardEnsemble ensemble_;
  std::vector<diff::Adam> reward_opt_;
  std::unique_ptr<worldmodel::WorldModel> world_model_;
  std::unique_ptr<oracle::SyntheticOracle> oracle_;
  oracle::HumanBridge bridge_;
  data::PreferenceDataset dataset_;
  bool reward_trained_ = false;
  std::int64_t next_query_id_ = 0;
  int sessions_ = 0;

  mutable std::mutex metrics_mutex_;
  std::string metrics_text_;
};

RunRecord train(const RunConfig& config, const std::string& run_dir = {});

}  // namespace runner
PBRL_NAMESPACE_END
