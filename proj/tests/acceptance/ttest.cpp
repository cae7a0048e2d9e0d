#include <cmath>

#include <fmt/format.h>

#include "acceptance.hpp"
#include "pbrl/runner/metrics.hpp"

using namespace pbrl;

namespace {

struct Case {
  std::vector<double> a, b;
  double t, p;
  int df;
};

// Reference values from an independent implementation (scipy.stats.ttest_rel).
const Case kCases[] = {
    {{1, 2, 3}, {2, 3, 5}, -4.0, 0.0571909584179, 2},
    {{5.1, 4.9, 6.2, 5.8, 6.0, 5.5}, {4.8, 4.7, 5.9, 5.9, 5.6, 5.1}, 3.27326835354, 0.0221184667223, 5},
    {{0.2, 0.4, 0.1, 0.5, 0.3}, {0.1, 0.1, 0.2, 0.2, 0.1}, 2.1380899353, 0.0993006832137, 4},
    {{12, 15, 11, 18, 14, 16, 13, 17}, {10, 14, 12, 15, 13, 13, 12, 14}, 3.26460681517, 0.0137764843615, 7},
    {{0.9, 0.8, 0.7, 0.95, 0.85}, {0.6, 0.7, 0.75, 0.6, 0.8}, 1.97814142019, 0.119054544061, 4},
    {{3, 1, 4, 1, 5, 9, 2, 6, 5, 3}, {2, 7, 1, 8, 2, 8, 1, 8, 2, 8}, -0.646996639221, 0.533785836685, 9},
};

}  // namespace

Outcome ttest_fixtures() {
  int ok = 0;
  std::string detail;
  for (const auto& c : kCases) {
    const auto r = runner::paired_ttest(c.a, c.b);
    const bool good = r.df == c.df && std::abs(r.t - c.t) < 1e-6 && std::abs(r.p - c.p) < 1e-3;
    ok += good ? 1 : 0;
    if (detail.empty()) detail = fmt::format("fixture t={:.4f} df={} p={:.4f}", r.t, r.df, r.p);
  }
  constexpr int total = static_cast<int>(std::size(kCases));
  return {ok == total, fmt::format("{}; {}/{} cases match", detail, ok, total)};
}
