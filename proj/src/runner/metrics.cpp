#include "pbrl/runner/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

PBRL_NAMESPACE_BEGIN
namespace runner {

namespace {

double ratio_mean(std::span<const double> pbrl, std::span<const double> reference, const char* what) {
  if (pbrl.size() != reference.size()) {
    throw MetricError(fmt::format("{}: {} episodes against {} reference episodes", what, pbrl.size(), reference.size()));
  }
  double sum = 0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < pbrl.size(); ++i) {
    if (std::abs(reference[i]) < kReferenceFloor) continue;
    sum += pbrl[i] / reference[i];
    ++used;
  }
  if (used < pbrl.size()) spdlog::debug("{}: excluded {} of {} episodes with zero reference", what, pbrl.size() - used, pbrl.size());
  if (used == 0) throw MetricError(std::string(what) + ": every reference episode is zero");
  return sum / static_cast<double>(used);
}

}  // namespace

double normalized_return(std::span<const double> pbrl, std::span<const double> reference) {
  return ratio_mean(pbrl, reference, "normalized_return");
}

double normalized_success(std::span<const double> pbrl, std::span<const double> reference) {
  return ratio_mean(pbrl, reference, "normalized_success");
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw MetricError("paired_ttest needs equal-length samples");
  if (a.size() < 2) throw MetricError("paired_ttest needs at least two pairs");
  const auto n = static_cast<double>(a.size());
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1));
  TTestResult r;
  r.df = static_cast<int>(a.size()) - 1;
  if (sd == 0) {
    if (mean == 0) return {0, 1, r.df};
    spdlog::warn("paired_ttest: identical nonzero differences, t is infinite");
    r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = 0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(n));
  boost::math::students_t dist(r.df);
  r.p = 2 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

std::string metrics_csv_header() { return "step,episode,eval_return,eval_success,method,seed"; }

std::string to_csv(const EvalRow& row) {
  return fmt::format("{},{},{},{},{},{}", row.step, row.episode, row.eval_return, row.eval_success, row.method, row.seed);
}

std::vector<EvalRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != metrics_csv_header()) throw ConfigError(path + ": unexpected metrics header");
  std::vector<EvalRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 6) throw ConfigError(path + ": malformed row '" + line + "'");
    try {
      rows.push_back({std::stoll(f[0]), std::stoi(f[1]), std::stod(f[2]), std::stod(f[3]), f[4], std::stoull(f[5])});
    } catch (const std::logic_error&) {
      throw ConfigError(path + ": malformed row '" + line + "'");
    }
  }
  return rows;
}

RunSummary load_run(const std::string& dir) {
  const auto root = std::filesystem::path(dir);
  std::ifstream cfg(root / "config.json");
  if (!cfg) throw ConfigError("no config.json in " + dir);
  const auto j = nlohmann::json::parse(cfg);
  RunSummary r;
  r.dir = dir;
  r.method = j.at("method").get<std::string>();
  r.oracle = j.value("oracle", "perfect");
  r.seed = j.at("seed").get<std::uint64_t>();
  r.rows = read_metrics_csv((root / "metrics.csv").string());
  return r;
}

namespace {

std::string method_key(const RunSummary& r) {
  if (r.method == "reference" || r.oracle == "perfect") return r.method;
  return r.method + "@" + r.oracle;
}

using RowKey = std::pair<std::int64_t, int>;

void aligned(const RunSummary& run, const RunSummary& ref, std::vector<double>& ret, std::vector<double>& ref_ret,
             std::vector<double>& succ, std::vector<double>& ref_succ) {
  std::map<RowKey, const EvalRow*> by_key;
  for (const auto& row : ref.rows) by_key[{row.step, row.episode}] = &row;
  for (const auto& row : run.rows) {
    auto it = by_key.find({row.step, row.episode});
    if (it == by_key.end()) continue;
    ret.push_back(row.eval_return);
    ref_ret.push_back(it->second->eval_return);
    succ.push_back(row.eval_success);
    ref_succ.push_back(it->second->eval_success);
  }
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

Report build_report(const std::vector<RunSummary>& runs) {
  std::map<std::uint64_t, const RunSummary*> reference;
  for (const auto& r : runs) {
    if (r.method == "reference") reference[r.seed] = &r;
  }
  if (reference.empty()) throw MetricError("report needs at least one reference run");

  std::map<std::string, MethodScore> scores;
  std::map<std::string, std::map<std::uint64_t, std::pair<double, double>>> by_seed;
  for (const auto& r : runs) {
    if (r.method == "reference") continue;
    auto ref = reference.find(r.seed);
    if (ref == reference.end()) {
      spdlog::warn("no reference run for seed {}; skipping {}", r.seed, r.dir);
      continue;
    }
    std::vector<double> ret, ref_ret, succ, ref_succ;
    aligned(r, *ref->second, ret, ref_ret, succ, ref_succ);
    double nr = std::numeric_limits<double>::quiet_NaN(), ns = nr;
    try {
      nr = normalized_return(ret, ref_ret);
    } catch (const MetricError& e) {
      spdlog::warn("{}: {}", r.dir, e.what());
    }
    try {
      ns = normalized_success(succ, ref_succ);
    } catch (const MetricError& e) {
      spdlog::warn("{}: {}", r.dir, e.what());
    }
    const auto key = method_key(r);
    auto& s = scores[key];
    s.method = key;
    s.seeds.push_back(r.seed);
    s.normalized_return.push_back(nr);
    s.normalized_success.push_back(ns);
    by_seed[key][r.seed] = {nr, ns};
  }

  Report report;
  for (auto& [key, s] : scores) {
    s.mean_return = mean_of(s.normalized_return);
    s.mean_success = mean_of(s.normalized_success);
    report.scores.push_back(s);
  }
  for (auto a = by_seed.begin(); a != by_seed.end(); ++a) {
    for (auto b = std::next(a); b != by_seed.end(); ++b) {
      for (int metric = 0; metric < 2; ++metric) {
        std::vector<double> xa, xb;
        for (const auto& [seed, v] : a->second) {
          auto other = b->second.find(seed);
          if (other == b->second.end()) continue;
          const double va = metric == 0 ? v.first : v.second;
          const double vb = metric == 0 ? other->second.first : other->second.second;
          if (std::isnan(va) || std::isnan(vb)) continue;
          xa.push_back(va);
          xb.push_back(vb);
        }
        if (xa.size() < 2) continue;
        report.tests.push_back({a->first, b->first, metric == 0 ? "normalized_return" : "normalized_success",
                                paired_ttest(xa, xb)});
      }
    }
  }
  return report;
}

std::string Report::scores_csv() const {
  std::string out = "method,seeds,mean_normalized_return,mean_normalized_success\n";
  for (const auto& s : scores) {
    out += fmt::format("{},{},{},{}\n", s.method, s.seeds.size(), s.mean_return, s.mean_success);
  }
  return out;
}

std::string Report::tests_csv() const {
  std::string out = "method_a,method_b,metric,t,p,df\n";
  for (const auto& t : tests) {
    out += fmt::format("{},{},{},{},{},{}\n", t.method_a, t.method_b, t.metric, t.result.t, t.result.p, t.result.df);
  }
  return out;
}

nlohmann::json Report::to_json() const {
  auto finite = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["methods"] = nlohmann::json::array();
  for (const auto& s : scores) {
    nlohmann::json m;
    m["method"] = s.method;
    m["seeds"] = s.seeds;
    m["normalized_return"] = nlohmann::json::array();
    m["normalized_success"] = nlohmann::json::array();
    for (double v : s.normalized_return) m["normalized_return"].push_back(finite(v));
    for (double v : s.normalized_success) m["normalized_success"].push_back(finite(v));
    m["mean_normalized_return"] = finite(s.mean_return);
    m["mean_normalized_success"] = finite(s.mean_success);
    j["methods"].push_back(m);
  }
  j["tests"] = nlohmann::json::array();
  for (const auto& t : tests) {
    j["tests"].push_back({{"method_a", t.method_a}, {"method_b", t.method_b}, {"metric", t.metric},
                          {"t", std::isfinite(t.result.t) ? nlohmann::json(t.result.t) : nlohmann::json(t.result.t > 0 ? "inf" : "-inf")},
                          {"p", t.result.p}, {"df", t.result.df}});
  }
  return j;
}

}  // namespace runner
PBRL_NAMESPACE_END
