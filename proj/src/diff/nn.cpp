#include "pbrl/diff/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

PBRL_NAMESPACE_BEGIN
namespace diff {

Var activate(Var x, Activation act) {
  switch (act) {
    case Activation::tanh:
      return tanh(x);
    case Activation::relu:
      return relu(x);
    case Activation::silu:
      return silu(x);
    case Activation::none:
      break;
  }
  return x;
}

void activate_inplace(Tensor& x, Activation act) {
  switch (act) {
    case Activation::tanh:
      for (auto& v : x.data) v = std::tanh(v);
      break;
    case Activation::relu:
      for (auto& v : x.data) v = v > 0 ? v : Real(0);
      break;
    case Activation::silu:
      for (auto& v : x.data) v = v / (Real(1) + std::exp(-v));
      break;
    case Activation::none:
      break;
  }
}

Linear::Linear(std::string name, int in, int out, std::mt19937_64& rng, bool with_bias) {
  const Real bound = Real(1) / std::sqrt(static_cast<Real>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  weight = Parameter{name + ".weight", Tensor::zeros({in, out})};
  for (auto& w : weight.value.data) w = static_cast<Real>(u(rng));
  if (with_bias) {
    bias = Parameter{name + ".bias", Tensor::zeros({1, out})};
    for (auto& b : bias.value.data) b = static_cast<Real>(u(rng));
  }
}

Var Linear::forward(Tape& t, Var x) const {
  return has_bias() ? linear(x, t.parameter(weight), t.parameter(bias)) : matmul(x, t.parameter(weight));
}

Tensor Linear::infer(const Tensor& x) const {
  using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using RowVector = Eigen::Matrix<Real, 1, Eigen::Dynamic>;
  const int in = in_features(), out = out_features();
  if (x.cols() != in) throw ShapeError("linear infer: input width " + std::to_string(x.cols()) + " != " + std::to_string(in));
  Tensor y = Tensor::zeros({x.rows(), out});
  const Eigen::Map<const RowMatrix> w(weight.value.data.data(), in, out);
  // Row at a time, so a batch gives bit-identical results to single rows.
  for (int r = 0; r < x.rows(); ++r) {
    Eigen::Map<RowVector> yr(y.data.data() + static_cast<std::size_t>(r) * out, out);
    yr.noalias() = Eigen::Map<const RowVector>(x.data.data() + static_cast<std::size_t>(r) * in, in) * w;
    if (has_bias()) yr += Eigen::Map<const RowVector>(bias.value.data.data(), out);
  }
  return y;
}

Mlp::Mlp(const std::string& name, const std::vector<int>& sizes, Activation hidden_act, Activation output_act,
         std::mt19937_64& rng)
    : hidden(hidden_act), output(output_act) {
  if (sizes.size() < 2) throw ConfigError("mlp needs at least input and output sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    layers.emplace_back(name + ".l" + std::to_string(i), sizes[i], sizes[i + 1], rng);
  }
}

Var Mlp::penultimate(Tape& t, Var x) const {
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) x = activate(layers[i].forward(t, x), hidden);
  return x;
}

Var Mlp::forward(Tape& t, Var x) const {
  return activate(layers.back().forward(t, penultimate(t, x)), output);
}

Tensor Mlp::infer(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].infer(h);
    activate_inplace(h, i + 1 < layers.size() ? hidden : output);
  }
  return h;
}

void Mlp::collect(ParameterList& out) {
  for (auto& l : layers) l.collect(out);
}
void Mlp::collect(ConstParameterList& out) const {
  for (const auto& l : layers) l.collect(out);
}

LayerNorm::LayerNorm(const std::string& name, int width)
    : gamma{name + ".gamma", Tensor::filled({1, width}, Real(1))}, beta{name + ".beta", Tensor::zeros({1, width})} {}

Var LayerNorm::forward(Tape& t, Var x) const {
  return layer_norm_rows(x, t.parameter(gamma), t.parameter(beta));
}

Embedding::Embedding(std::string name, int count, int width, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.02);
  table = Parameter{std::move(name) + ".table", Tensor::zeros({count, width})};
  for (auto& w : table.value.data) w = static_cast<Real>(n(rng));
}

Var Embedding::forward(Tape& t, std::span<const int> indices) const {
  return gather_rows(t.parameter(table), indices);
}

void copy_parameters(const ConstParameterList& src, const ParameterList& dst) {
  if (src.size() != dst.size()) throw ShapeError("copy_parameters: parameter count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i]->value.shape != dst[i]->value.shape) throw ShapeError("copy_parameters: shape mismatch at " + src[i]->name);
    dst[i]->value.data = src[i]->value.data;
  }
}

std::vector<Real> flatten(const ConstParameterList& params) {
  std::vector<Real> out;
  for (const auto* p : params) out.insert(out.end(), p->value.data.begin(), p->value.data.end());
  return out;
}

}  // namespace diff
PBRL_NAMESPACE_END
