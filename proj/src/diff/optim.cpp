#include "pbrl/diff/optim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

PBRL_NAMESPACE_BEGIN
namespace diff {

namespace {

std::string non_finite_parameter(const ConstParameterList& params) {
  for (const auto* p : params) {
    for (Real x : p->value.data) {
      if (!std::isfinite(x)) return p->name;
    }
  }
  return {};
}

}  // namespace

LossAndGradients forward_backward(const ConstParameterList& params, const LossFn& loss_fn) {
  Tape tape;
  for (const auto* p : params) tape.parameter(*p);
  Var loss = loss_fn(tape);
  const Real value = loss.item();
  if (!std::isfinite(value)) {
    std::string where = non_finite_parameter(params);
    if (where.empty()) where = tape.first_non_finite();
    throw NumericalError("non-finite loss (" + std::to_string(value) + ") at " + where);
  }
  tape.backward(loss);
  LossAndGradients out{value, {}};
  out.gradients.reserve(params.size());
  for (const auto* p : params) {
    auto g = tape.grad(*p);
    if (std::any_of(g.begin(), g.end(), [](Real x) { return !std::isfinite(x); })) {
      throw NumericalError("non-finite gradient for parameter " + p->name);
    }
    out.gradients.push_back(std::move(g));
  }
  return out;
}

Real evaluate_loss(const LossFn& loss_fn) {
  Tape tape;
  return loss_fn(tape).item();
}

Adam::Adam(const ConstParameterList& params, AdamConfig config) : config_(config) {
  for (const auto* p : params) {
    m_.emplace_back(p->value.size(), Real(0));
    v_.emplace_back(p->value.size(), Real(0));
  }
}

void Adam::step(const ParameterList& params, const Gradients& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeError("adam: parameter list does not match optimizer state");
  }
  Real clip = 1;
  if (config_.max_grad_norm > 0) {
    double sq = 0;
    for (const auto& g : grads) {
      for (Real x : g) sq += static_cast<double>(x) * x;
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.max_grad_norm) clip = static_cast<Real>(config_.max_grad_norm / norm);
  }
  ++step_;
  const Real b1 = config_.beta1, b2 = config_.beta2;
  const Real c1 = Real(1) - static_cast<Real>(std::pow(b1, static_cast<double>(step_)));
  const Real c2 = Real(1) - static_cast<Real>(std::pow(b2, static_cast<double>(step_)));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k]->value.data;
    auto& m = m_[k];
    auto& v = v_[k];
    const auto& g = grads[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const Real gi = g[i] * clip;
      m[i] = b1 * m[i] + (Real(1) - b1) * gi;
      v[i] = b2 * v[i] + (Real(1) - b2) * gi * gi;
      const Real mhat = m[i] / c1;
      const Real vhat = v[i] / c2;
      w[i] -= config_.lr * (mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

Real train_step(const ParameterList& params, Adam& opt, const LossFn& loss_fn) {
  auto lg = forward_backward(as_const(params), loss_fn);
  opt.step(params, lg.gradients);
  return lg.loss;
}

double GradCheckReport::max_relative_error() const {
  double m = 0;
  for (const auto& e : entries) m = std::max(m, e.max_relative_error);
  return m;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  for (const auto& e : entries) {
    os << e.name << ": rel=" << e.max_relative_error << " |g|max=" << e.max_abs_analytic << "\n";
  }
  return os.str();
}

GradCheckReport grad_check(const ParameterList& params, const LossFn& loss_fn, double tolerance, double h) {
  GradCheckReport report;
  report.tolerance = tolerance;
  const auto analytic = forward_backward(as_const(params), loss_fn).gradients;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k]->value.data;
    GradCheckEntry entry{params[k]->name, 0.0, 0.0};
    for (std::size_t i = 0; i < w.size(); ++i) {
      const Real saved = w[i];
      w[i] = static_cast<Real>(saved + h);
      const double up = evaluate_loss(loss_fn);
      w[i] = static_cast<Real>(saved - h);
      const double down = evaluate_loss(loss_fn);
      w[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      entry.max_relative_error = std::max(entry.max_relative_error, std::abs(a - numeric) / denom);
      entry.max_abs_analytic = std::max(entry.max_abs_analytic, std::abs(a));
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace diff
PBRL_NAMESPACE_END
