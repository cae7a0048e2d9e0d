#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pbrl/diff/tape.hpp"

PBRL_NAMESPACE_BEGIN
namespace diff {

using Gradients = std::vector<std::vector<Real>>;
using LossFn = std::function<Var(Tape&)>;

struct LossAndGradients {
  Real loss = 0;
  Gradients gradients;  // aligned with the parameter list
};

/// Records loss_fn on a fresh tape, back-propagates, and returns the gradient
/// of every listed parameter. Throws NumericalError naming the first non-finite
/// parameter or tape node when the loss or a gradient is not finite.
LossAndGradients forward_backward(const ConstParameterList& params, const LossFn& loss_fn);

/// Loss value only, no backward sweep.
Real evaluate_loss(const LossFn& loss_fn);

struct AdamConfig {
  Real lr = Real(1e-3);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);
  /// Global L2 gradient-norm clip; <= 0 disables.
  Real max_grad_norm = 0;
};

class Adam {
 public:
  Adam() = default;
  Adam(const ConstParameterList& params, AdamConfig config);
  Adam(const ParameterList& params, AdamConfig config) : Adam(as_const(params), config) {}

  /// One bias-corrected Adam update. params must match the construction list.
  void step(const ParameterList& params, const Gradients& grads);

  std::int64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  AdamConfig& config() { return config_; }
  const std::vector<std::vector<Real>>& first_moment() const { return m_; }
  const std::vector<std::vector<Real>>& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<std::vector<Real>> m_;
  std::vector<std::vector<Real>> v_;
};

/// forward_backward followed by an Adam step; returns the pre-step loss.
Real train_step(const ParameterList& params, Adam& opt, const LossFn& loss_fn);

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0;
  double max_abs_analytic = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0;

  double max_relative_error() const;
  bool passed() const { return max_relative_error() < tolerance; }
  std::string summary() const;
};

/// Compares analytic gradients with central finite differences of step h.
/// Relative error per element is |a - n| / max(|a|, |n|, 1e-8). Failures are
/// reported, never thrown. Parameters are restored afterwards.
GradCheckReport grad_check(const ParameterList& params, const LossFn& loss_fn, double tolerance,
                           double h = 1e-5);

}  // namespace diff
PBRL_NAMESPACE_END
