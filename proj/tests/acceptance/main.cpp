#include <chrono>
#include <exception>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "acceptance.hpp"

namespace {

struct Line {
  std::string id;
  std::string title;
  Outcome outcome;
  double seconds = 0;
};

Outcome guarded(const std::function<Outcome()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite A1-A9"};
  std::string only_list;
  ExperimentOptions exp{.runs_dir = "acceptance_runs"};
  bool strict = false;
  app.add_option("--only", only_list, "Comma-separated criteria, e.g. A1,A4");
  app.add_option("--runs-dir", exp.runs_dir, "Where the keydoor experiment runs are written");
  app.add_flag("--reuse-runs", exp.reuse, "Reuse finished runs found in --runs-dir");
  app.add_flag("--strict", strict, "Exit non-zero when any criterion fails");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  std::set<std::string> only;
  std::stringstream ss(only_list);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) only.insert(item);
  auto wanted = [&](const std::string& id) { return only.empty() || only.count(id) > 0; };

  std::vector<Line> lines;
  auto run = [&](const std::string& id, const std::string& title, const std::function<Outcome()>& fn) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Line line{id, title, guarded(fn)};
    line.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << fmt::format("{} {} {} ({:.1f}s): {}", id, line.outcome.pass ? "PASS" : "FAIL", title, line.seconds,
                             line.outcome.detail)
              << std::endl;
    lines.push_back(line);
  };

  run("A1", "gradient integrity", gradient_integrity);
  run("A2", "conservation", conservation);
  run("A3", "degenerate combinations", degenerate_equivalences);
  run("A4", "reward recovery", reward_recovery);

  if (wanted("A5") || wanted("A6") || wanted("A7")) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentOutcomes out;
    try {
      out = keydoor_experiments(exp);
    } catch (const std::exception& e) {
      const Outcome failed{false, std::string("exception: ") + e.what()};
      out = {failed, failed, failed};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::pair<std::string, std::pair<std::string, Outcome>> exps[] = {
        {"A5", {"directional end-to-end", out.directional}},
        {"A6", {"mistake robustness", out.mistakes}},
        {"A7", {"prior-only failure", out.prior_only}}};
    for (const auto& [id, rest] : exps) {
      if (!wanted(id)) continue;
      std::cout << fmt::format("{} {} {} ({:.1f}s shared): {}", id, rest.second.pass ? "PASS" : "FAIL", rest.first,
                               secs, rest.second.detail)
                << std::endl;
      lines.push_back({id, rest.first, rest.second, secs});
    }
  }

  run("A8", "t-test correctness", ttest_fixtures);
  run("A9", "world-model learnability", world_model_learnability);

  int passed = 0;
  for (const auto& l : lines) passed += l.outcome.pass ? 1 : 0;
  std::cout << fmt::format("{}/{} criteria pass", passed, lines.size()) << std::endl;
  return strict && passed != static_cast<int>(lines.size()) ? 1 : 0;
}
