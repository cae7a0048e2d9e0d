#pragma once

#include <string>

// Declared outside the library namespace: gradient_integrity.cpp is compiled
// in double precision, everything else in single.

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct ExperimentOptions {
  std::string runs_dir;
  /// Skip runs whose directory already holds a complete metrics.csv.
  bool reuse = false;
};

struct ExperimentOutcomes {
  Outcome directional;
  Outcome mistakes;
  Outcome prior_only;
};

Outcome gradient_integrity();
Outcome conservation();
Outcome degenerate_equivalences();
Outcome reward_recovery();
ExperimentOutcomes keydoor_experiments(const ExperimentOptions& options);
Outcome ttest_fixtures();
Outcome world_model_learnability();
