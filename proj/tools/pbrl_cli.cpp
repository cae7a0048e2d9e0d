#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "pbrl/runner/query_service.hpp"
#include "pbrl/runner/trainer.hpp"

using namespace pbrl;

namespace {

int run_train(const std::string& config_path, const std::optional<std::string>& env,
              const std::optional<std::string>& method, const std::optional<std::string>& oracle,
              const std::optional<std::uint64_t>& seed, const std::optional<std::int64_t>& steps,
              const std::optional<int>& serve, std::string out) {
  runner::RunConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config " + config_path);
    cfg.merge(nlohmann::json::parse(in));
  }
  if (env) cfg.env = *env;
  if (method) cfg.method = *method;
  if (oracle) cfg.oracle = *oracle;
  if (seed) cfg.seed = *seed;
  if (steps) cfg.total_steps = *steps;
  cfg.validate();
  if (serve && cfg.oracle == "human" && cfg.human_wait_seconds == 0) cfg.human_wait_seconds = 600;
  if (out.empty()) out = fmt::format("runs/{}_{}_{}", cfg.env, cfg.method, cfg.seed);

  runner::Trainer trainer(cfg, out);
  std::unique_ptr<runner::QueryService> service;
  if (serve) {
    service = std::make_unique<runner::QueryService>(trainer.bridge(), [&trainer] { return trainer.metrics_snapshot(); });
    const int port = service->start("0.0.0.0", *serve);
    spdlog::info("query API on port {}", port);
  }
  trainer.on_eval = [](const std::vector<runner::EvalRow>& rows) {
    double ret = 0, succ = 0;
    for (const auto& r : rows) {
      ret += r.eval_return;
      succ += r.eval_success;
    }
    spdlog::info("step {:>7}  return {:.3f}  success {:.2f}", rows.front().step, ret / rows.size(), succ / rows.size());
  };
  const auto record = trainer.run();
  spdlog::info("done: {} sessions, {} labels, mean eval success {:.3f}, run dir {}", record.sessions.size(),
               record.labeled, record.mean_eval_success(), out);
  return 0;
}

int run_report(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<runner::RunSummary> runs;
  for (const auto& d : dirs) runs.push_back(runner::load_run(d));
  const auto report = runner::build_report(runs);
  if (out.empty()) {
    std::cout << report.scores_csv() << "\n" << report.tests_csv();
    return 0;
  }
  std::filesystem::create_directories(out);
  std::ofstream(std::filesystem::path(out) / "scores.csv") << report.scores_csv();
  std::ofstream(std::filesystem::path(out) / "ttests.csv") << report.tests_csv();
  std::ofstream(std::filesystem::path(out) / "report.json") << report.to_json().dump(2) << "\n";
  std::cout << report.scores_csv() << "\n" << report.tests_csv();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-based RL with attention-guided credit assignment"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error");

  auto* train = app.add_subcommand("train", "Run one training job");
  std::string config_path, out;
  std::optional<std::string> env, method, oracle;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  std::optional<int> serve;
  train->add_option("--config", config_path, "JSON run config");
  train->add_option("--env", env, "keydoor|pointmass");
  train->add_option("--method", method, "prior|rvar|nrp|bisim|none|prior-only|reference");
  train->add_option("--oracle", oracle, "perfect|mistake:<eps>|human");
  train->add_option("--seed", seed);
  train->add_option("--steps", steps, "Total environment steps");
  train->add_option("--serve", serve, "Serve the query API on this port");
  train->add_option("--out", out, "Run directory");

  auto* report = app.add_subcommand("report", "Normalized scores and paired t-tests over finished runs");
  std::vector<std::string> runs;
  std::string report_out;
  report->add_option("--runs", runs, "Run directories")->required();
  report->add_option("--out", report_out, "Directory for scores.csv, ttests.csv and report.json");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));
  try {
    if (*train) return run_train(config_path, env, method, oracle, seed, steps, serve, out);
    if (*report) return run_report(runs, report_out);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("bad JSON: {}", e.what());
    return 2;
  }
  return 0;
}
