#include "pbrl/runner/config.hpp"

#include <set>

#include "pbrl/credit/credit.hpp"
#include "pbrl/oracle/oracle.hpp"

PBRL_NAMESPACE_BEGIN
namespace runner {

namespace {

nlohmann::json dqn_json(const agent::DqnConfig& c) {
  return {{"hidden", c.hidden},
          {"hidden_layers", c.hidden_layers},
          {"gamma", c.gamma},
          {"lr", c.lr},
          {"batch", c.batch},
          {"target_sync", c.target_sync},
          {"epsilon_start", c.epsilon_start},
          {"epsilon_end", c.epsilon_end},
          {"epsilon_decay_steps", c.epsilon_decay_steps},
          {"max_grad_norm", c.max_grad_norm}};
}

nlohmann::json world_model_json(const worldmodel::WorldModelConfig& c) {
  return {{"categoricals", c.latent.categoricals},
          {"classes", c.latent.classes},
          {"obs_hidden", c.obs_hidden},
          {"width", c.width},
          {"layers", c.layers},
          {"heads", c.heads},
          {"batch", c.batch},
          {"obs_lr", c.obs_lr},
          {"dyn_lr", c.dyn_lr},
          {"obs_steps", c.obs_steps},
          {"dyn_steps", c.dyn_steps}};
}

void reject_unknown(const nlohmann::json& given, const nlohmann::json& known, const std::string& where) {
  if (!given.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : given.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
  }
}

template <class T>
void take(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["env"] = env;
  j["env_config"] = env_config;
  j["method"] = method;
  j["oracle"] = oracle;
  j["seed"] = seed;
  j["segment_length"] = segment_length;
  j["queries_per_session"] = queries_per_session;
  j["session_interval"] = session_interval;
  j["world_model_interval"] = world_model_interval;
  j["feedback_budget"] = feedback_budget;
  j["ensemble_size"] = ensemble_size;
  j["lambda"] = lambda ? nlohmann::json(*lambda) : nlohmann::json(nullptr);
  j["total_steps"] = total_steps;
  j["random_steps"] = random_steps;
  j["intrinsic_steps"] = intrinsic_steps;
  j["eval_interval"] = eval_interval;
  j["eval_episodes"] = eval_episodes;
  j["candidate_multiplier"] = candidate_multiplier;
  j["reward_hidden"] = reward_hidden;
  j["reward_hidden_layers"] = reward_hidden_layers;
  j["reward_lr"] = reward_lr;
  j["reward_batch"] = reward_batch;
  j["reward_steps"] = reward_steps;
  j["bisim_pairs"] = bisim_pairs;
  j["equal_threshold"] = equal_threshold;
  j["fixed_fraction_mistakes"] = fixed_fraction_mistakes;
  j["buffer_capacity"] = buffer_capacity;
  j["dqn"] = dqn_json(dqn);
  j["world_model"] = world_model_json(world_model);
  j["save_checkpoints"] = save_checkpoints;
  j["dump_attention"] = dump_attention;
  j["human_wait_seconds"] = human_wait_seconds;
  return j;
}

void RunConfig::merge(const nlohmann::json& j) {
  reject_unknown(j, to_json(), "");
  take(j, "env", env);
  if (j.contains("env_config")) env_config = j.at("env_config").is_null() ? nlohmann::json::object() : j.at("env_config");
  take(j, "method", method);
  take(j, "oracle", oracle);
  take(j, "seed", seed);
  take(j, "segment_length", segment_length);
  take(j, "queries_per_session", queries_per_session);
  take(j, "session_interval", session_interval);
  take(j, "world_model_interval", world_model_interval);
  take(j, "feedback_budget", feedback_budget);
  take(j, "ensemble_size", ensemble_size);
  if (j.contains("lambda")) {
    if (j.at("lambda").is_null()) {
      lambda.reset();
    } else {
      lambda = j.at("lambda").get<double>();
    }
  }
  take(j, "total_steps", total_steps);
  take(j, "random_steps", random_steps);
  take(j, "intrinsic_steps", intrinsic_steps);
  take(j, "eval_interval", eval_interval);
  take(j, "eval_episodes", eval_episodes);
  take(j, "candidate_multiplier", candidate_multiplier);
  take(j, "reward_hidden", reward_hidden);
  take(j, "reward_hidden_layers", reward_hidden_layers);
  take(j, "reward_lr", reward_lr);
  take(j, "reward_batch", reward_batch);
  take(j, "reward_steps", reward_steps);
  take(j, "bisim_pairs", bisim_pairs);
  take(j, "equal_threshold", equal_threshold);
  take(j, "fixed_fraction_mistakes", fixed_fraction_mistakes);
  take(j, "buffer_capacity", buffer_capacity);
  take(j, "save_checkpoints", save_checkpoints);
  take(j, "dump_attention", dump_attention);
  take(j, "human_wait_seconds", human_wait_seconds);
  if (j.contains("dqn")) {
    const auto& d = j.at("dqn");
    reject_unknown(d, dqn_json(dqn), "dqn.");
    take(d, "hidden", dqn.hidden);
    take(d, "hidden_layers", dqn.hidden_layers);
    take(d, "gamma", dqn.gamma);
    take(d, "lr", dqn.lr);
    take(d, "batch", dqn.batch);
    take(d, "target_sync", dqn.target_sync);
    take(d, "epsilon_start", dqn.epsilon_start);
    take(d, "epsilon_end", dqn.epsilon_end);
    take(d, "epsilon_decay_steps", dqn.epsilon_decay_steps);
    take(d, "max_grad_norm", dqn.max_grad_norm);
  }
  if (j.contains("world_model")) {
    const auto& w = j.at("world_model");
    reject_unknown(w, world_model_json(world_model), "world_model.");
    take(w, "categoricals", world_model.latent.categoricals);
    take(w, "classes", world_model.latent.classes);
    take(w, "obs_hidden", world_model.obs_hidden);
    take(w, "width", world_model.width);
    take(w, "layers", world_model.layers);
    take(w, "heads", world_model.heads);
    take(w, "batch", world_model.batch);
    take(w, "obs_lr", world_model.obs_lr);
    take(w, "dyn_lr", world_model.dyn_lr);
    take(w, "obs_steps", world_model.obs_steps);
    take(w, "dyn_steps", world_model.dyn_steps);
  }
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  c.merge(j);
  return c;
}

void RunConfig::validate() const {
  if (env != "keydoor" && env != "pointmass") throw ConfigError("env must be keydoor or pointmass, got '" + env + "'");
  if (!is_reference()) credit::CreditStrategy::parse(method, env);
  const auto spec = oracle::OracleSpec::parse(oracle);
  spec.validate();
  if (segment_length < 2) throw ConfigError("segment length l must be >= 2");
  if (queries_per_session < 1) throw ConfigError("queries per session M must be >= 1");
  if (session_interval < segment_length) throw ConfigError("session interval K must be >= l");
  if (feedback_budget < queries_per_session) throw ConfigError("feedback budget must be >= M");
  if (world_model_interval < 1) throw ConfigError("world model interval j must be >= 1");
  if (ensemble_size < 1) throw ConfigError("ensemble size must be >= 1");
  if (lambda && !(*lambda >= 0)) throw ConfigError("lambda must be non-negative");
  if (total_steps < 1 || random_steps < 0 || intrinsic_steps < 0) throw ConfigError("step counts must be non-negative");
  if (eval_interval < 1 || eval_episodes < 1) throw ConfigError("evaluation interval and episodes must be positive");
  if (candidate_multiplier < 1) throw ConfigError("candidate multiplier must be >= 1");
  if (reward_hidden < 1 || reward_hidden_layers < 1 || reward_batch < 1 || reward_steps < 0) {
    throw ConfigError("reward network sizes must be positive");
  }
  if (!(reward_lr > 0)) throw ConfigError("reward learning rate must be positive");
  if (bisim_pairs < 1) throw ConfigError("bisim pairs must be >= 1");
  if (buffer_capacity < segment_length) throw ConfigError("buffer capacity must hold at least one segment");
  if (dqn.hidden < 1 || dqn.hidden_layers < 1 || dqn.batch < 1) throw ConfigError("agent network sizes must be positive");
  if (!(dqn.gamma > 0 && dqn.gamma <= 1)) throw ConfigError("agent gamma must lie in (0, 1]");
  if (!(dqn.epsilon_start >= 0 && dqn.epsilon_start <= 1 && dqn.epsilon_end >= 0 && dqn.epsilon_end <= 1)) {
    throw ConfigError("epsilon must lie in [0, 1]");
  }
  if (world_model.heads < 1 || world_model.width % world_model.heads != 0) {
    throw ConfigError("world model width must be divisible by the head count");
  }
  if (world_model.latent.categoricals < 1 || world_model.latent.classes < 2) throw ConfigError("bad latent shape");
  if (human_wait_seconds < 0) throw ConfigError("human wait must be non-negative");
}

}  // namespace runner
PBRL_NAMESPACE_END
