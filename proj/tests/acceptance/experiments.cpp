#include <filesystem>
#include <fstream>
#include <map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "acceptance.hpp"
#include "pbrl/runner/trainer.hpp"

using namespace pbrl;

namespace {

// Desk schedule: 60k steps with a session every 2k steps spends the whole
// 200-query budget by step 48k.
runner::RunConfig base_config(std::uint64_t seed) {
  runner::RunConfig c;
  c.env = "keydoor";
  c.seed = seed;
  c.total_steps = 60000;
  c.session_interval = 2000;
  c.feedback_budget = 200;
  c.save_checkpoints = false;
  c.dump_attention = false;
  return c;
}

struct Job {
  std::string method;
  std::string oracle;
};

const Job kJobs[] = {
    {"reference", "perfect"}, {"none", "perfect"},        {"rvar", "perfect"},
    {"prior", "perfect"},     {"prior", "mistake:0.2"},   {"prior-only", "perfect"},
};

std::string run_name(const Job& j, std::uint64_t seed) {
  std::string oracle = j.oracle;
  for (auto& ch : oracle)
    if (ch == ':') ch = '_';
  return fmt::format("{}_{}_{}", j.method, oracle, seed);
}

bool finished(const std::filesystem::path& dir, std::int64_t total_steps) {
  if (!std::filesystem::exists(dir / "metrics.csv")) return false;
  try {
    const auto rows = runner::read_metrics_csv((dir / "metrics.csv").string());
    return !rows.empty() && rows.back().step == total_steps;
  } catch (const Error&) {
    return false;
  }
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0 : s / static_cast<double>(v.size());
}

}  // namespace

ExperimentOutcomes keydoor_experiments(const ExperimentOptions& options) {
  const std::filesystem::path root(options.runs_dir);
  std::filesystem::create_directories(root);
  std::vector<runner::RunSummary> runs;
  for (std::uint64_t seed : runner::kSeedSuite) {
    for (const auto& job : kJobs) {
      auto cfg = base_config(seed);
      cfg.method = job.method;
      cfg.oracle = job.oracle;
      const auto dir = root / run_name(job, seed);
      if (!(options.reuse && finished(dir, cfg.total_steps))) {
        std::filesystem::remove_all(dir);
        const auto t0 = std::chrono::steady_clock::now();
        runner::train(cfg, dir.string());
        spdlog::warn("finished {} in {:.0f}s", dir.string(),
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      }
      runs.push_back(runner::load_run(dir.string()));
    }
  }

  const auto report = runner::build_report(runs);
  std::ofstream(root / "scores.csv") << report.scores_csv();
  std::ofstream(root / "ttests.csv") << report.tests_csv();
  std::ofstream(root / "report.json") << report.to_json().dump(2) << "\n";

  std::map<std::string, std::map<std::uint64_t, double>> success;
  for (const auto& s : report.scores)
    for (std::size_t i = 0; i < s.seeds.size(); ++i) success[s.method][s.seeds[i]] = s.normalized_success[i];
  auto values = [&](const std::string& key) {
    std::vector<double> out;
    for (std::uint64_t seed : runner::kSeedSuite) {
      // A run with no usable reference entries scores nothing.
      auto it = success[key].find(seed);
      out.push_back(it == success[key].end() || std::isnan(it->second) ? 0.0 : it->second);
    }
    return out;
  };
  const auto prior = values("prior"), rvar = values("rvar"), none = values("none");
  const auto noisy = values("prior@mistake:0.2"), prior_only = values("prior-only");
  const double mp = mean(prior), mr = mean(rvar), mn = mean(none), mm = mean(noisy), mo = mean(prior_only);
  const auto tt = runner::paired_ttest(prior, none);

  ExperimentOutcomes out;
  out.directional = {mp >= mr && mr >= mn && tt.t > 0 && tt.p < 0.1,
                     fmt::format("normalized success prior {:.3f}, rvar {:.3f}, none {:.3f}; prior vs none t={:.3f} "
                                 "p={:.4f} (need prior>=rvar>=none and prior>none at p<0.1)",
                                 mp, mr, mn, tt.t, tt.p)};
  out.mistakes = {mm >= mn, fmt::format("prior with 20% label flips {:.3f} vs none {:.3f} (need >=)", mm, mn)};
  out.prior_only = {mo < 0.2 * mp,
                    fmt::format("prior-only {:.3f} vs 0.2 x prior {:.3f} (need <)", mo, 0.2 * mp)};
  return out;
}
