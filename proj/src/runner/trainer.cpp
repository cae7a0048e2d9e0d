#include "pbrl/runner/trainer.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "pbrl/diff/optim.hpp"
#include "pbrl/envs/keydoor.hpp"
#include "pbrl/envs/pointmass.hpp"

PBRL_NAMESPACE_BEGIN
namespace runner {

namespace {

// Independent generator streams, so e.g. the world model never shifts the
// agent's exploration draws.
enum Stream : std::uint64_t {
  kEnv = 1,
  kAct,
  kReplay,
  kSession,
  kEval,
  kReward,
  kBisim,
  kOracle,
  kMembers,
  kAgent,
  kWorldModel,
};

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

struct Trainer::Streams {
  explicit Streams(std::uint64_t seed)
      : env(derive(seed, kEnv)),
        act(derive(seed, kAct)),
        replay(derive(seed, kReplay)),
        session(derive(seed, kSession)),
        bisim(derive(seed, kBisim)) {}
  std::mt19937_64 env;
  std::mt19937_64 act;
  std::mt19937_64 replay;
  std::mt19937_64 session;
  std::mt19937_64 bisim;
  std::vector<std::mt19937_64> members;
};

double RunRecord::mean_eval_success() const {
  if (evals.empty()) return 0;
  double s = 0;
  for (const auto& e : evals) s += e.eval_success;
  return s / static_cast<double>(evals.size());
}

double RunRecord::mean_eval_return() const {
  if (evals.empty()) return 0;
  double s = 0;
  for (const auto& e : evals) s += e.eval_return;
  return s / static_cast<double>(evals.size());
}

nlohmann::json render_observation(const envs::Environment& env, const envs::Observation& obs) {
  auto copy = env.clone();
  if (auto* grid = dynamic_cast<envs::KeyDoorGrid*>(copy.get())) {
    const int n = grid->config().size;
    grid->set_state(envs::KeyDoorGrid::agent_cell(obs, n), envs::KeyDoorGrid::holds_key(obs, n));
  } else if (auto* pm = dynamic_cast<envs::PointMass*>(copy.get())) {
    pm->set_position({obs.at(0), obs.at(1)});
  } else {
    throw ConfigError("no renderer for environment " + env.spec().name);
  }
  return copy->render();
}

Trainer::Trainer(RunConfig config, std::string run_dir) : config_(std::move(config)), dir_(std::move(run_dir)) {
  config_.validate();
  env_ = envs::make_environment(config_.env, config_.env_config);
  eval_env_ = env_->clone();
  rng_ = std::make_unique<Streams>(config_.seed);
  if (!config_.is_reference()) {
    strategy_ = credit::CreditStrategy::parse(config_.method, config_.env);
    if (config_.lambda) strategy_.lambda = static_cast<Real>(*config_.lambda);
  }
  buffer_ = data::ReplayBuffer(static_cast<std::size_t>(config_.buffer_capacity));
  agent_ = agent::DqnAgent(env_->spec().obs_dim, action_count(), config_.dqn, derive(config_.seed, kAgent));

  const reward::RewardNetConfig net{env_->spec().obs_dim, envs::action_dim(env_->spec().action_space),
                                    config_.reward_hidden, config_.reward_hidden_layers, diff::Activation::silu};
  ensemble_ = reward::RewardEnsemble(net, config_.ensemble_size, derive(config_.seed, kMembers));
  for (int e = 0; e < ensemble_.size(); ++e) {
    reward_opt_.emplace_back(diff::as_const(ensemble_.member(e).parameters()),
                             diff::AdamConfig{.lr = static_cast<Real>(config_.reward_lr)});
    rng_->members.emplace_back(derive(config_.seed, kReward, static_cast<std::uint64_t>(e)));
  }
  if (!config_.is_reference() && strategy_.needs_world_model()) {
    auto wc = config_.world_model;
    wc.segment_length = config_.segment_length;
    world_model_ = std::make_unique<worldmodel::WorldModel>(env_->spec().obs_dim, env_->spec().action_space, wc,
                                                            derive(config_.seed, kWorldModel));
  }
  auto spec = oracle::OracleSpec::parse(config_.oracle);
  if (spec.kind != oracle::OracleKind::human) {
    spec.seed = derive(config_.seed, kOracle);
    spec.equal_threshold = static_cast<Real>(config_.equal_threshold);
    spec.fixed_fraction = config_.fixed_fraction_mistakes;
    spec.budget = config_.feedback_budget;
    oracle_ = std::make_unique<oracle::SyntheticOracle>(spec);
  }

  metrics_text_ = metrics_csv_header() + "\n";
  if (!dir_.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir_) / "checkpoints");
    fs::create_directories(fs::path(dir_) / "attention");
    auto cfg = config_.to_json();
    if (!config_.is_reference()) cfg["resolved_lambda"] = strategy_.lambda;
    write_file("config.json", cfg.dump(2) + "\n");
    write_file("metrics.csv", metrics_text_);
    write_file("timing.csv", "step,wall_seconds\n");
    const auto prefs = (fs::path(dir_) / "preferences.jsonl").string();
    std::ofstream(prefs, std::ios::trunc).flush();
    dataset_ = data::PreferenceDataset(prefs);
  }
}

Trainer::~Trainer() = default;

int Trainer::action_count() const {
  if (envs::is_discrete(env_->spec().action_space)) return std::get<envs::DiscreteSpace>(env_->spec().action_space).n;
  return 9;
}

envs::Action Trainer::to_env_action(int id) const {
  if (envs::is_discrete(env_->spec().action_space)) return envs::one_hot_action(id, action_count());
  const auto* pm = dynamic_cast<const envs::PointMass*>(env_.get());
  if (pm == nullptr) throw ConfigError("continuous environment without a discretisation");
  return pm->discretized_action(id);
}

void Trainer::write_file(const std::string& rel, const std::string& text) const {
  if (dir_.empty()) return;
  std::ofstream out(std::filesystem::path(dir_) / rel, std::ios::trunc);
  out << text;
}

std::string Trainer::metrics_snapshot() const {
  std::lock_guard lock(metrics_mutex_);
  return metrics_text_;
}

void Trainer::append_metrics(const std::vector<EvalRow>& rows) {
  std::string text;
  for (const auto& r : rows) text += to_csv(r) + "\n";
  {
    std::lock_guard lock(metrics_mutex_);
    metrics_text_ += text;
  }
  if (!dir_.empty()) {
    std::ofstream out(std::filesystem::path(dir_) / "metrics.csv", std::ios::app);
    out << text;
  }
}

Real Trainer::reward_label(const envs::Observation& s, const envs::Action& a) const {
  return reward_trained_ ? reward::ensemble_reward(ensemble_, s, a) : Real(0);
}

RunRecord Trainer::run() {
  RunRecord record;
  record.config = config_;
  record.preferences_path = dir_.empty() ? std::string() : (std::filesystem::path(dir_) / "preferences.jsonl").string();
  const auto start = std::chrono::steady_clock::now();
  const std::int64_t pretrain = config_.pretrain_steps();

  envs::EnvState state = env_->reset(rng_->env);
  std::int64_t episode = 0;
  std::vector<const data::Transition*> batch;
  for (std::int64_t step = 0; step < config_.total_steps; ++step) {
    int action_id;
    if (step < config_.random_steps) {
      action_id = std::uniform_int_distribution<int>(0, action_count() - 1)(rng_->act);
    } else {
      action_id = agent_.act(state.observation, agent::ActMode::explore, agent_.epsilon_at(step), rng_->act);
    }
    const envs::Action action = to_env_action(action_id);
    const envs::StepResult result = env_->step(action);

    data::Transition t;
    t.state = state.observation;
    t.action = action;
    t.action_id = action_id;
    t.target_reward = result.target_reward;
    t.next_state = result.state.observation;
    t.done = result.terminal;
    t.episode = episode;
    t.step_index = state.step_index;
    if (config_.is_reference()) {
      t.reward_label = result.target_reward;
    } else if (step < pretrain) {
      const auto key = env_->state_key(t.next_state);
      t.reward_label = agent::intrinsic_pretrain_reward(counts_, key);
      counts_.add(key);
    } else {
      t.reward_label = reward_label(t.state, t.action);
    }
    buffer_.add(std::move(t));

    if (result.state.done) {
      state = env_->reset(rng_->env);
      ++episode;
    } else {
      state = result.state;
    }

    const std::int64_t done_steps = step + 1;
    if (done_steps > config_.random_steps && buffer_.size() >= static_cast<std::size_t>(config_.dqn.batch)) {
      batch.clear();
      for (auto i : buffer_.sample_indices(static_cast<std::size_t>(config_.dqn.batch), rng_->replay)) {
        batch.push_back(&buffer_.at(i));
      }
      agent_.update(batch);
    }

    if (!config_.is_reference() && done_steps >= pretrain) {
      const std::int64_t since = done_steps - pretrain;
      if (world_model_) {
        try {
          if (since == 0) {
            world_model_->pretrain_observation_model(buffer_);
            world_model_->freeze_observation_model();
          }
          if (since % config_.world_model_interval == 0) {
            record.last_dynamics_loss = world_model_->train_dynamics(buffer_);
            ++record.world_model_updates;
          }
        } catch (const DataError& e) {
          spdlog::warn("step {}: world model update skipped: {}", done_steps, e.what());
        }
      }
      if (since % config_.session_interval == 0 && record.labeled < config_.feedback_budget) {
        session(done_steps, record);
      }
    }

    if (done_steps % config_.eval_interval == 0) {
      evaluate(done_steps, record);
      if (!dir_.empty()) {
        std::ofstream out(std::filesystem::path(dir_) / "timing.csv", std::ios::app);
        out << done_steps << ","
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << "\n";
      }
    }
  }
  return record;
}

void Trainer::evaluate(std::int64_t step, RunRecord& record) {
  // Start states depend only on seed and step, so runs of different methods
  // face the same episodes.
  std::mt19937_64 rng(derive(config_.seed, kEval, static_cast<std::uint64_t>(step)));
  std::vector<EvalRow> rows;
  for (int ep = 0; ep < config_.eval_episodes; ++ep) {
    envs::EnvState s = eval_env_->reset(rng);
    double ret = 0;
    bool success = false;
    while (!s.done) {
      const int a = agent::greedy_action(agent_.q_values(s.observation));
      const auto r = eval_env_->step(to_env_action(a));
      ret += r.target_reward;
      success = success || r.success;
      s = r.state;
    }
    rows.push_back({step, ep, ret, success ? 1.0 : 0.0, config_.method, config_.seed});
  }
  append_metrics(rows);
  record.evals.insert(record.evals.end(), rows.begin(), rows.end());
  if (on_eval) on_eval(rows);
}

std::vector<Real> Trainer::importance(const data::Segment& s) const {
  if (world_model_) return credit::importance_from_attention(world_model_->attention(s));
  return std::vector<Real>(static_cast<std::size_t>(s.length()), Real(1) / static_cast<Real>(s.length()));
}

nlohmann::json Trainer::query_payload(const data::Segment& a, const data::Segment& b) const {
  nlohmann::json segments = nlohmann::json::array();
  nlohmann::json attention = nlohmann::json::array();
  for (const auto* s : {&a, &b}) {
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& o : s->states) frames.push_back(render_observation(*env_, o));
    segments.push_back({{"frames", frames}, {"actions", s->actions}});
    attention.push_back(importance(*s));
  }
  return {{"segments", segments}, {"attention", attention}};
}

std::vector<data::PreferenceTriplet> Trainer::synthetic_labels(std::int64_t step, int count) {
  const auto candidates = static_cast<std::size_t>(count) * static_cast<std::size_t>(config_.candidate_multiplier);
  const auto pairs = data::sample_candidate_pairs(buffer_, candidates, config_.segment_length, rng_->session());
  const auto chosen = data::select_queries(pairs, ensemble_, static_cast<std::size_t>(count), rng_->session);
  std::vector<data::PreferenceTriplet> out;
  for (auto i : chosen) out.push_back(oracle_->triplet(pairs[i].first, pairs[i].second, step, next_query_id_++));
  return out;
}

void Trainer::post_human_queries(const std::vector<data::SegmentPair>& pairs) {
  for (const auto& p : pairs) {
    oracle::PendingQuery q;
    q.query_id = next_query_id_++;
    q.seg_a = p.first;
    q.seg_b = p.second;
    q.payload = query_payload(p.first, p.second);
    bridge_.post(std::move(q));
  }
}

std::vector<data::PreferenceTriplet> Trainer::human_labels(std::int64_t, int count) {
  std::vector<data::PreferenceTriplet> out;
  auto take = [&] {
    for (auto& [q, l] : bridge_.drain()) {
      data::PreferenceTriplet t;
      t.seg_a = std::move(q.seg_a);
      t.seg_b = std::move(q.seg_b);
      t.label = l.label;
      t.labeler = "human";
      t.timestamp = l.timestamp_ms;
      t.query_id = l.query_id;
      out.push_back(std::move(t));
    }
  };
  // Late answers to the previous session's queries, then retire what is left.
  take();
  if (const auto expired = bridge_.expire_pending(); expired > 0) spdlog::info("{} unanswered queries expired", expired);

  const auto room = config_.feedback_budget - static_cast<std::int64_t>(dataset_.size()) - static_cast<std::int64_t>(out.size());
  const int ask = static_cast<int>(std::min<std::int64_t>(count, room));
  if (ask > 0) {
    try {
      const auto pairs = data::sample_candidate_pairs(
          buffer_, static_cast<std::size_t>(ask) * static_cast<std::size_t>(config_.candidate_multiplier),
          config_.segment_length, rng_->session());
      const auto chosen = data::select_queries(pairs, ensemble_, static_cast<std::size_t>(ask), rng_->session);
      std::vector<data::SegmentPair> picked;
      for (auto i : chosen) picked.push_back(pairs[i]);
      post_human_queries(picked);
    } catch (const DataError& e) {
      spdlog::warn("no queries posted: {}", e.what());
    }
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(config_.human_wait_seconds);
    const std::size_t wanted = out.size() + static_cast<std::size_t>(ask);
    while (out.size() < wanted && std::chrono::steady_clock::now() < deadline) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      take();
    }
  }
  if (static_cast<std::int64_t>(out.size()) > config_.feedback_budget - static_cast<std::int64_t>(dataset_.size())) {
    out.resize(static_cast<std::size_t>(config_.feedback_budget - static_cast<std::int64_t>(dataset_.size())));
  }
  return out;
}

void Trainer::session(std::int64_t step, RunRecord& record) {
  if (before_session) before_session(*this, sessions_);
  const int count = static_cast<int>(std::min<std::int64_t>(config_.queries_per_session, config_.feedback_budget - record.labeled));
  std::vector<data::PreferenceTriplet> fresh;
  try {
    fresh = oracle_ ? synthetic_labels(step, count) : human_labels(step, count);
  } catch (const DataError& e) {
    spdlog::warn("step {}: feedback session skipped: {}", step, e.what());
    return;
  }
  if (fresh.empty()) return;

  SessionRecord s;
  s.index = sessions_;
  s.step = step;
  s.new_labels = static_cast<int>(fresh.size());
  int informative = 0, agree = 0;
  for (const auto& t : fresh) {
    if (t.label.is_neutral()) continue;
    double p = 0;
    for (const auto& m : ensemble_.members()) p += reward::preference_probability(m, t.seg_a, t.seg_b);
    p /= ensemble_.size();
    ++informative;
    if ((p > 0.5) == (t.label.a > t.label.b)) ++agree;
  }
  s.label_accuracy = informative > 0 ? static_cast<double>(agree) / informative : 1.0;

  nlohmann::json dump = nlohmann::json::array();
  for (auto& t : fresh) {
    if (world_model_ && config_.dump_attention) {
      dump.push_back({{"query_id", t.query_id}, {"a", importance(t.seg_a)}, {"b", importance(t.seg_b)}});
    }
    dataset_.append(std::move(t));
  }
  record.labeled = static_cast<std::int64_t>(dataset_.size());
  s.total_labels = static_cast<int>(dataset_.size());

  train_reward(step, s);
  data::relabel(buffer_, ensemble_);
  reward_trained_ = true;

  if (config_.save_checkpoints) write_file(fmt::format("checkpoints/reward_session_{:03d}.json", sessions_), ensemble_.to_json().dump() + "\n");
  if (world_model_ && config_.dump_attention) write_file(fmt::format("attention/session_{:03d}.json", sessions_), dump.dump() + "\n");
  record.checkpoints += config_.save_checkpoints ? 1 : 0;
  record.sessions.push_back(s);
  spdlog::debug("step {}: session {} labels {} loss {:.4f} acc {:.2f}", step, s.index, s.total_labels, s.reward_loss,
                s.label_accuracy);
  ++sessions_;
}

void Trainer::train_reward(std::int64_t, SessionRecord& s) {
  const auto& items = dataset_.items();
  const std::size_t n = items.size();
  std::vector<credit::TripletImportance> imp;
  const bool attention_targets = strategy_.redistributes() && strategy_.kind != credit::CreditKind::rvar && strategy_.lambda != 0;
  if (attention_targets) {
    imp.reserve(n);
    for (const auto& t : items) imp.push_back({importance(t.seg_a), importance(t.seg_b)});
  }
  const std::size_t bs = std::min<std::size_t>(n, static_cast<std::size_t>(config_.reward_batch));
  double total = 0;
  for (int e = 0; e < ensemble_.size(); ++e) {
    auto& member = ensemble_.member(e);
    auto params = member.parameters();
    auto& rng = rng_->members[static_cast<std::size_t>(e)];
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    Real last = 0;
    std::vector<const data::PreferenceTriplet*> batch(bs);
    std::vector<credit::TripletImportance> batch_imp;
    for (int k = 0; k < config_.reward_steps; ++k) {
      batch_imp.clear();
      for (auto& b : batch) {
        const std::size_t i = pick(rng);
        b = &items[i];
        if (attention_targets) batch_imp.push_back(imp[i]);
      }
      last = diff::train_step(params, reward_opt_[static_cast<std::size_t>(e)], [&](diff::Tape& t) {
        return credit::combined_loss(t, member, batch, strategy_, world_model_.get(), batch_imp, &rng_->bisim,
                                     credit::BisimOptions{config_.bisim_pairs});
      });
    }
    total += last;
  }
  s.reward_loss = total / ensemble_.size();
}

RunRecord train(const RunConfig& config, const std::string& run_dir) {
  Trainer t(config, run_dir);
  return t.run();
}

}  // namespace runner
PBRL_NAMESPACE_END
