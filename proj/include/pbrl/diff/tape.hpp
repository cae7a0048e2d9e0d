#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pbrl/diff/tensor.hpp"

PBRL_NAMESPACE_BEGIN
namespace diff {

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  Real item() const { return value().item(); }
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }
};

/// Reverse-mode tape. A tape lives for one forward/backward pass; nodes are
/// appended in topological order so backward is a reverse sweep.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value, std::string op = "input");
  /// Leaf bound to a model parameter. Repeated calls with the same parameter
  /// return the same node, so gradients accumulate.
  Var parameter(const Parameter& p);

  /// Seeds d(root)/d(root) = 1 and propagates. root must be a scalar.
  void backward(Var root);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() root w.r.t. a node; zeros if unreached.
  std::vector<Real> grad(Var v) const;
  /// Gradient w.r.t. a parameter previously bound with parameter(); zeros otherwise.
  std::vector<Real> grad(const Parameter& p) const;

  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// First node (in recording order) holding a non-finite value, as "op#id".
  std::string first_non_finite() const;

  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  struct Node {
    Tensor value;
    const Tensor* ref = nullptr;  // parameters are referenced, not copied
    Buffer grad;
    std::function<void(Tape&, std::size_t)> backward;
    bool requires_grad = false;
    std::string op;
    const Tensor& val() const { return ref != nullptr ? *ref : value; }
  };
  Var record(Tensor value, bool requires_grad, std::string op,
             std::function<void(Tape&, std::size_t)> backward);
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  /// Gradient buffer for a node, allocated on first use.
  Buffer& grad_buffer(std::size_t id);

 private:
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// ---- elementwise and linear algebra ----------------------------------------

Var matmul(Var a, Var b);
/// x[n,k] * w[k,m] + bias[1,m]
Var linear(Var x, Var w, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a[n,m] + b[1,m] broadcast over rows.
Var add_row(Var a, Var b);
/// a[n,m] * b[n,1] broadcast over columns.
Var mul_col(Var a, Var b);
Var scale(Var a, Real s);
Var add_scalar(Var a, Real s);
Var tanh(Var a);
Var relu(Var a);
Var silu(Var a);
Var sigmoid(Var a);
Var square(Var a);
Var abs(Var a);
Var log(Var a);
Var clamp(Var a, Real lo, Real hi);

// ---- reductions and reshaping ---------------------------------------------

Var sum(Var a);
Var mean(Var a);
/// [n,m] -> [n,1]
Var row_sum(Var a);
Var reshape(Var a, int rows, int cols);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, int begin, int count);
Var slice_cols(Var a, int begin, int count);
/// out[i] = a[indices[i]]; backward scatter-adds.
Var gather_rows(Var a, std::span<const int> indices);
/// Value copy with no gradient path.
Var stop_gradient(Var a);

// ---- normalisation ---------------------------------------------------------

Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gamma, Var beta, Real eps = Real(1e-5));

// ---- attention -------------------------------------------------------------

struct AttentionResult {
  Var output;
  /// Head-major weights [heads * q_len, k_len]; row h*q_len+i is head h,
  /// query i. Not differentiable.
  Tensor weights;
};

/// Multi-head scaled dot-product attention over projected q[Tq,d], k[Tk,d],
/// v[Tk,dv]. With causal=true, query i only sees keys j <= i.
AttentionResult multi_head_attention(Var q, Var k, Var v, int heads, bool causal);

}  // namespace diff
PBRL_NAMESPACE_END
