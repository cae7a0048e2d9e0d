#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pbrl/diff/tape.hpp"

PBRL_NAMESPACE_BEGIN
namespace diff {

enum class Activation { none, tanh, relu, silu };

Var activate(Var x, Activation act);
/// In-place activation for tape-free inference.
void activate_inplace(Tensor& x, Activation act);

/// Fully connected layer, weight stored [in, out]. Init is uniform in
/// +-1/sqrt(fan_in) for both weight and bias. The bias may be omitted.
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(std::string name, int in, int out, std::mt19937_64& rng, bool with_bias = true);

  bool has_bias() const { return !bias.value.data.empty(); }

  int in_features() const { return weight.value.rows(); }
  int out_features() const { return weight.value.cols(); }
  Var forward(Tape& t, Var x) const;
  /// Tape-free forward for inference. Each row is computed independently.
  Tensor infer(const Tensor& x) const;
  void collect(ParameterList& out) {
    out.push_back(&weight);
    if (has_bias()) out.push_back(&bias);
  }
  void collect(ConstParameterList& out) const {
    out.push_back(&weight);
    if (has_bias()) out.push_back(&bias);
  }
};

/// Stack of Linear layers; `hidden` activation between layers and `output`
/// activation after the last one.
struct Mlp {
  std::vector<Linear> layers;
  Activation hidden = Activation::relu;
  Activation output = Activation::none;

  Mlp() = default;
  Mlp(const std::string& name, const std::vector<int>& sizes, Activation hidden_act, Activation output_act,
      std::mt19937_64& rng);

  Var forward(Tape& t, Var x) const;
  /// Output of the last hidden layer (after activation), i.e. the input of the final Linear.
  Var penultimate(Tape& t, Var x) const;
  Tensor infer(const Tensor& x) const;
  void collect(ParameterList& out);
  void collect(ConstParameterList& out) const;
};

struct LayerNorm {
  Parameter gamma;
  Parameter beta;

  LayerNorm() = default;
  LayerNorm(const std::string& name, int width);
  Var forward(Tape& t, Var x) const;
  void collect(ParameterList& out) { out.push_back(&gamma), out.push_back(&beta); }
  void collect(ConstParameterList& out) const { out.push_back(&gamma), out.push_back(&beta); }
};

/// Lookup table [count, width].
struct Embedding {
  Parameter table;

  Embedding() = default;
  Embedding(std::string name, int count, int width, std::mt19937_64& rng);
  Var forward(Tape& t, std::span<const int> indices) const;
  void collect(ParameterList& out) { out.push_back(&table); }
  void collect(ConstParameterList& out) const { out.push_back(&table); }
};

/// Copies parameter values from src to dst (same architecture).
void copy_parameters(const ConstParameterList& src, const ParameterList& dst);

/// Flattened parameter values, for checksums and bit-equality tests.
std::vector<Real> flatten(const ConstParameterList& params);
inline std::vector<Real> flatten(const ParameterList& params) { return flatten(as_const(params)); }

}  // namespace diff
PBRL_NAMESPACE_END
