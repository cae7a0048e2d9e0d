#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pbrl/core/config.hpp"
#include "pbrl/core/errors.hpp"

PBRL_NAMESPACE_BEGIN
namespace runner {

/// Reference entries with |x| below this are excluded from ratio means.
inline constexpr double kReferenceFloor = 1e-8;

/// Mean of pbrl[i] / reference[i] over aligned episodes with a usable
/// reference. MetricError when the lengths differ or nothing is usable.
double normalized_return(std::span<const double> pbrl, std::span<const double> reference);
/// Same ratio over 0/1 success indicators.
double normalized_success(std::span<const double> pbrl, std::span<const double> reference);

struct TTestResult {
  double t = 0;
  double p = 1;
  int df = 0;
};

/// Two-tailed paired t-test on d = a - b with df = n - 1. Constant nonzero
/// differences give t = +-inf, p = 0.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

/// One row of metrics.csv.
struct EvalRow {
  std::int64_t step = 0;
  int episode = 0;
  double eval_return = 0;
  double eval_success = 0;
  std::string method;
  std::uint64_t seed = 0;
};

std::string metrics_csv_header();
std::string to_csv(const EvalRow& row);
/// ConfigError on a malformed file.
std::vector<EvalRow> read_metrics_csv(const std::string& path);

/// A finished run as seen by the report: method, seed and its eval rows.
struct RunSummary {
  std::string dir;
  std::string method;
  std::string oracle;
  std::uint64_t seed = 0;
  std::vector<EvalRow> rows;
};

RunSummary load_run(const std::string& dir);

struct MethodScore {
  std::string method;
  std::vector<std::uint64_t> seeds;
  std::vector<double> normalized_return;
  std::vector<double> normalized_success;
  double mean_return = 0;
  double mean_success = 0;
};

struct PairwiseTest {
  std::string method_a;
  std::string method_b;
  std::string metric;
  TTestResult result;
};

struct Report {
  std::vector<MethodScore> scores;
  std::vector<PairwiseTest> tests;

  std::string scores_csv() const;
  std::string tests_csv() const;
  nlohmann::json to_json() const;
};

/// Aligns every run with the reference run of the same seed (method
/// "reference") by (step, episode) and scores it. Methods are keyed by
/// method name plus oracle when the oracle is not perfect. Pairwise tests use
/// the seeds two methods share. MetricError without reference runs.
Report build_report(const std::vector<RunSummary>& runs);

}  // namespace runner
PBRL_NAMESPACE_END
