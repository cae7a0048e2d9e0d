#include "pbrl/diff/tape.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <set>

#include "pbrl/diff/attention.hpp"

PBRL_NAMESPACE_BEGIN
namespace diff {

namespace {

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

ConstMapMatrix as_matrix(const Tensor& t) { return ConstMapMatrix(t.data.data(), t.rows(), t.cols()); }
ConstMapMatrix as_matrix(const Buffer& v, int rows, int cols) {
  return ConstMapMatrix(v.data(), rows, cols);
}
MapMatrix as_matrix(Buffer& v, int rows, int cols) { return MapMatrix(v.data(), rows, cols); }

std::string shape_str(const Tensor& t) {
  return "[" + std::to_string(t.rows()) + "," + std::to_string(t.cols()) + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

Tensor matrix_like(int rows, int cols) { return Tensor::zeros({rows, cols}); }

bool any_requires(std::initializer_list<Var> vars) {
  for (const auto& v : vars) {
    if (v.tape->requires_grad(v)) return true;
  }
  return false;
}

/// Elementwise unary op helper: forward f(x), backward g(x, y) * upstream.
template <typename Forward, typename Derivative>
Var unary(Var a, const char* op, Forward f, Derivative df) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  Tensor y = Tensor::zeros({x.rows(), x.cols()});
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = f(x.data[i]);
  const std::size_t ai = a.id;
  return t.record(std::move(y), t.requires_grad(a), op, [ai, df](Tape& tp, std::size_t self) {
    if (!tp.node(ai).requires_grad) return;
    const auto& up = tp.node(self).grad;
    const auto& xv = tp.node(ai).val().data;
    const auto& yv = tp.node(self).value.data;
    auto& g = tp.grad_buffer(ai);
    for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i] * df(xv[i], yv[i]);
  });
}

}  // namespace

// ---- Tape ------------------------------------------------------------------

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::record(Tensor value, bool requires_grad, std::string op,
                 std::function<void(Tape&, std::size_t)> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.op = std::move(op);
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value, std::string op) { return record(std::move(value), false, std::move(op), {}); }

Var Tape::parameter(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  n.ref = &p.value;
  n.requires_grad = true;
  n.op = "param:" + p.name;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const { return nodes_.at(v.id).val(); }

Buffer& Tape::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.val().size(), Real(0));
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw Error("backward: variable belongs to another tape");
  if (value(root).size() != 1) throw ShapeError("backward: root must be a scalar");
  for (auto& n : nodes_) n.grad.clear();
  if (!nodes_[root.id].requires_grad) return;
  grad_buffer(root.id)[0] = Real(1);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
}

std::vector<Real> Tape::grad(Var v) const {
  const auto& n = nodes_.at(v.id);
  if (n.grad.empty()) return std::vector<Real>(n.val().size(), Real(0));
  return {n.grad.begin(), n.grad.end()};
}

std::vector<Real> Tape::grad(const Parameter& p) const {
  const auto it = param_nodes_.find(&p);
  if (it == param_nodes_.end() || nodes_[it->second].grad.empty()) return std::vector<Real>(p.value.size(), Real(0));
  const auto& g = nodes_[it->second].grad;
  return {g.begin(), g.end()};
}

std::string Tape::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& d = nodes_[i].val().data;
    if (std::any_of(d.begin(), d.end(), [](Real x) { return !std::isfinite(x); })) {
      return nodes_[i].op + "#" + std::to_string(i);
    }
  }
  return {};
}

// ---- Tensor helpers ----------------------------------------------------------

void check_unique_names(const ConstParameterList& params) {
  std::set<std::string> seen;
  for (const auto* p : params) {
    if (!seen.insert(p->name).second) throw ConfigError("duplicate parameter name: " + p->name);
  }
}

std::size_t parameter_count(const ConstParameterList& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->value.size();
  return n;
}

// ---- linear algebra ----------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) throw ShapeError("matmul: " + shape_str(av) + " x " + shape_str(bv));
  Tensor y = matrix_like(av.rows(), bv.cols());
  as_matrix(y.data, y.rows(), y.cols()).noalias() = as_matrix(av) * as_matrix(bv);
  const std::size_t ai = a.id, bi = b.id;
  return t.record(std::move(y), any_requires({a, b}), "matmul", [ai, bi](Tape& tp, std::size_t self) {
    const Tensor& A = tp.node(ai).val();
    const Tensor& B = tp.node(bi).val();
    const auto up = as_matrix(tp.node(self).grad, A.rows(), B.cols());
    if (tp.node(ai).requires_grad) {
      as_matrix(tp.grad_buffer(ai), A.rows(), A.cols()).noalias() += up * as_matrix(B).transpose();
    }
    if (tp.node(bi).requires_grad) {
      as_matrix(tp.grad_buffer(bi), B.rows(), B.cols()).noalias() += as_matrix(A).transpose() * up;
    }
  });
}

Var linear(Var x, Var w, Var bias) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = bias.value();
  if (xv.cols() != wv.rows() || static_cast<int>(bv.size()) != wv.cols()) {
    throw ShapeError("linear: input " + shape_str(xv) + ", weight " + shape_str(wv) + ", bias " + shape_str(bv));
  }
  Tensor y = matrix_like(xv.rows(), wv.cols());
  auto ym = as_matrix(y.data, y.rows(), y.cols());
  ym.noalias() = as_matrix(xv) * as_matrix(wv);
  ym.rowwise() += as_matrix(bv.data, 1, wv.cols()).row(0);
  const std::size_t xi = x.id, wi = w.id, bi = bias.id;
  return t.record(std::move(y), any_requires({x, w, bias}), "linear", [xi, wi, bi](Tape& tp, std::size_t self) {
    const Tensor& X = tp.node(xi).val();
    const Tensor& W = tp.node(wi).val();
    const auto up = as_matrix(tp.node(self).grad, X.rows(), W.cols());
    if (tp.node(xi).requires_grad) {
      as_matrix(tp.grad_buffer(xi), X.rows(), X.cols()).noalias() += up * as_matrix(W).transpose();
    }
    if (tp.node(wi).requires_grad) {
      as_matrix(tp.grad_buffer(wi), W.rows(), W.cols()).noalias() += as_matrix(X).transpose() * up;
    }
    if (tp.node(bi).requires_grad) {
      as_matrix(tp.grad_buffer(bi), 1, W.cols()) += up.colwise().sum();
    }
  });
}

Var add(Var a, Var b) {
  Tape& t = *a.tape;
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  y.grad.clear();
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += bd[i];
  const std::size_t ai = a.id, bi = b.id;
  return t.record(std::move(y), any_requires({a, b}), "add", [ai, bi](Tape& tp, std::size_t self) {
    const auto& up = tp.node(self).grad;
    for (std::size_t id : {ai, bi}) {
      if (!tp.node(id).requires_grad) continue;
      auto& g = tp.grad_buffer(id);
      for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  y.grad.clear();
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] -= bd[i];
  const std::size_t ai = a.id, bi = b.id;
  return t.record(std::move(y), any_requires({a, b}), "sub", [ai, bi](Tape& tp, std::size_t self) {
    const auto& up = tp.node(self).grad;
    if (tp.node(ai).requires_grad) {
      auto& g = tp.grad_buffer(ai);
      for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i];
    }
    if (tp.node(bi).requires_grad) {
      auto& g = tp.grad_buffer(bi);
      for (std::size_t i = 0; i < up.size(); ++i) g[i] -= up[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = *a.tape;
  require_same_shape(a.value(), b.value(), "mul");
  const auto& ad = a.value().data;
  const auto& bd = b.value().data;
  Tensor y = Tensor::zeros({a.rows(), a.cols()});
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = ad[i] * bd[i];
  const std::size_t ai = a.id, bi = b.id;
  return t.record(std::move(y), any_requires({a, b}), "mul", [ai, bi](Tape& tp, std::size_t self) {
    const auto& up = tp.node(self).grad;
    const auto& A = tp.node(ai).val().data;
    const auto& B = tp.node(bi).val().data;
    if (tp.node(ai).requires_grad) {
      auto& g = tp.grad_buffer(ai);
      for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i] * B[i];
    }
    if (tp.node(bi).requires_grad) {
      auto& g = tp.grad_buffer(bi);
      for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i] * A[i];
    }
  });
}

Var add_row(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (static_cast<int>(bv.size()) != av.cols()) throw ShapeError("add_row: " + shape_str(av) + " + " + shape_str(bv));
  Tensor y = av;
  y.grad.clear();
  const int cols = av.cols();
  for (int r = 0; r < av.rows(); ++r) {
    for (int c = 0; c < cols; ++c) y.at(r, c) += bv.data[c];
  }
  const std::size_t ai = a.id, bi = b.id;
  return t.record(std::move(y), any_requires({a, b}), "add_row", [ai, bi, cols](Tape& tp, std::size_t self) {
    const auto& up = tp.node(self).grad;
    if (tp.node(ai).requires_grad) {
      auto& g = tp.grad_buffer(ai);
      for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i];
    }
    if (tp.node(bi).requires_grad) {
      auto& g = tp.grad_buffer(bi);
      for (std::size_t i = 0; i < up.size(); ++i) g[i % cols] += up[i];
    }
  });
}

Var mul_col(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (static_cast<int>(bv.size()) != av.rows()) throw ShapeError("mul_col: " + shape_str(av) + " * " + shape_str(bv));
  Tensor y = Tensor::zeros({av.rows(), av.cols()});
  const int cols = av.cols();
  for (int r = 0; r < av.rows(); ++r) {
    for (int c = 0; c < cols; ++c) y.at(r, c) = av.at(r, c) * bv.data[r];
  }
  const std::size_t ai = a.id, bi = b.id;
  return t.record(std::move(y), any_requires({a, b}), "mul_col", [ai, bi, cols](Tape& tp, std::size_t self) {
    const auto& up = tp.node(self).grad;
    const auto& A = tp.node(ai).val().data;
    const auto& B = tp.node(bi).val().data;
    if (tp.node(ai).requires_grad) {
      auto& g = tp.grad_buffer(ai);
      for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i] * B[i / cols];
    }
    if (tp.node(bi).requires_grad) {
      auto& g = tp.grad_buffer(bi);
      for (std::size_t i = 0; i < up.size(); ++i) g[i / cols] += up[i] * A[i];
    }
  });
}

Var scale(Var a, Real s) {
  return unary(a, "scale", [s](Real x) { return s * x; }, [s](Real, Real) { return s; });
}

Var add_scalar(Var a, Real s) {
  return unary(a, "add_scalar", [s](Real x) { return x + s; }, [](Real, Real) { return Real(1); });
}

Var tanh(Var a) {
  return unary(a, "tanh", [](Real x) { return std::tanh(x); }, [](Real, Real y) { return Real(1) - y * y; });
}

Var relu(Var a) {
  return unary(
      a, "relu", [](Real x) { return x > 0 ? x : Real(0); }, [](Real x, Real) { return x > 0 ? Real(1) : Real(0); });
}

Var sigmoid(Var a) {
  return unary(
      a, "sigmoid", [](Real x) { return Real(1) / (Real(1) + std::exp(-x)); },
      [](Real, Real y) { return y * (Real(1) - y); });
}

Var silu(Var a) {
  return unary(
      a, "silu", [](Real x) { return x / (Real(1) + std::exp(-x)); },
      [](Real x, Real) {
        const Real s = Real(1) / (Real(1) + std::exp(-x));
        return s * (Real(1) + x * (Real(1) - s));
      });
}

Var square(Var a) {
  return unary(a, "square", [](Real x) { return x * x; }, [](Real x, Real) { return Real(2) * x; });
}

Var abs(Var a) {
  return unary(
      a, "abs", [](Real x) { return std::abs(x); },
      [](Real x, Real) { return x > 0 ? Real(1) : (x < 0 ? Real(-1) : Real(0)); });
}

Var log(Var a) {
  return unary(a, "log", [](Real x) { return std::log(x); }, [](Real x, Real) { return Real(1) / x; });
}

Var clamp(Var a, Real lo, Real hi) {
  return unary(
      a, "clamp", [lo, hi](Real x) { return std::clamp(x, lo, hi); },
      [lo, hi](Real x, Real) { return (x >= lo && x <= hi) ? Real(1) : Real(0); });
}

// ---- reductions ----------------------------------------------------------------

Var sum(Var a) {
  Tape& t = *a.tape;
  Real s = 0;
  for (Real x : a.value().data) s += x;
  const std::size_t ai = a.id;
  return t.record(Tensor::scalar(s), t.requires_grad(a), "sum", [ai](Tape& tp, std::size_t self) {
    const Real up = tp.node(self).grad[0];
    auto& g = tp.grad_buffer(ai);
    for (auto& x : g) x += up;
  });
}

Var mean(Var a) {
  const auto n = a.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), Real(1) / static_cast<Real>(n));
}

Var row_sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const int rows = av.rows(), cols = av.cols();
  Tensor y = Tensor::zeros({rows, 1});
  for (int r = 0; r < rows; ++r) {
    Real s = 0;
    for (int c = 0; c < cols; ++c) s += av.at(r, c);
    y.data[r] = s;
  }
  const std::size_t ai = a.id;
  return t.record(std::move(y), t.requires_grad(a), "row_sum", [ai, cols](Tape& tp, std::size_t self) {
    const auto& up = tp.node(self).grad;
    auto& g = tp.grad_buffer(ai);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[i / cols];
  });
}

Var reshape(Var a, int rows, int cols) {
  Tape& t = *a.tape;
  if (static_cast<std::size_t>(rows) * cols != a.value().size()) {
    throw ShapeError("reshape: " + shape_str(a.value()) + " to [" + std::to_string(rows) + "," + std::to_string(cols) + "]");
  }
  Tensor y({rows, cols}, a.value().data);
  const std::size_t ai = a.id;
  return t.record(std::move(y), t.requires_grad(a), "reshape", [ai](Tape& tp, std::size_t self) {
    const auto& up = tp.node(self).grad;
    auto& g = tp.grad_buffer(ai);
    for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  Tape& t = *parts.front().tape;
  const int rows = parts.front().rows();
  int cols = 0;
  bool rg = false;
  std::vector<std::size_t> ids;
  std::vector<int> widths;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
    rg = rg || t.requires_grad(p);
    ids.push_back(p.id);
    widths.push_back(p.cols());
  }
  Tensor y = Tensor::zeros({rows, cols});
  int offset = 0;
  for (const auto& p : parts) {
    const Tensor& pv = p.value();
    for (int r = 0; r < rows; ++r) {
      std::copy_n(pv.data.begin() + static_cast<std::ptrdiff_t>(r) * pv.cols(), pv.cols(),
                  y.data.begin() + static_cast<std::ptrdiff_t>(r) * cols + offset);
    }
    offset += pv.cols();
  }
  return t.record(std::move(y), rg, "concat_cols", [ids, widths, rows, cols](Tape& tp, std::size_t self) {
    const auto& up = tp.node(self).grad;
    int off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const int w = widths[k];
      if (tp.node(ids[k]).requires_grad) {
        auto& g = tp.grad_buffer(ids[k]);
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < w; ++c) g[static_cast<std::size_t>(r) * w + c] += up[static_cast<std::size_t>(r) * cols + off + c];
        }
      }
      off += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  Tape& t = *parts.front().tape;
  const int cols = parts.front().cols();
  int rows = 0;
  bool rg = false;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> sizes;
  std::vector<Real> data;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
    rg = rg || t.requires_grad(p);
    ids.push_back(p.id);
    sizes.push_back(p.value().size());
    data.insert(data.end(), p.value().data.begin(), p.value().data.end());
  }
  return t.record(Tensor({rows, cols}, std::move(data)), rg, "concat_rows", [ids, sizes](Tape& tp, std::size_t self) {
    const auto& up = tp.node(self).grad;
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.node(ids[k]).requires_grad) {
        auto& g = tp.grad_buffer(ids[k]);
        for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += up[off + i];
      }
      off += sizes[k];
    }
  });
}

Var slice_rows(Var a, int begin, int count) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  if (begin < 0 || count < 0 || begin + count > av.rows()) throw ShapeError("slice_rows out of range");
  const int cols = av.cols();
  std::vector<Real> d(av.data.begin() + static_cast<std::ptrdiff_t>(begin) * cols,
                      av.data.begin() + static_cast<std::ptrdiff_t>(begin + count) * cols);
  const std::size_t ai = a.id;
  const std::size_t off = static_cast<std::size_t>(begin) * cols;
  return t.record(Tensor({count, cols}, std::move(d)), t.requires_grad(a), "slice_rows",
                  [ai, off](Tape& tp, std::size_t self) {
                    const auto& up = tp.node(self).grad;
                    auto& g = tp.grad_buffer(ai);
                    for (std::size_t i = 0; i < up.size(); ++i) g[off + i] += up[i];
                  });
}

Var slice_cols(Var a, int begin, int count) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  if (begin < 0 || count < 0 || begin + count > av.cols()) throw ShapeError("slice_cols out of range");
  const int rows = av.rows(), cols = av.cols();
  Tensor y = Tensor::zeros({rows, count});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < count; ++c) y.at(r, c) = av.at(r, begin + c);
  }
  const std::size_t ai = a.id;
  return t.record(std::move(y), t.requires_grad(a), "slice_cols", [ai, begin, count, rows, cols](Tape& tp, std::size_t self) {
    const auto& up = tp.node(self).grad;
    auto& g = tp.grad_buffer(ai);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < count; ++c) g[static_cast<std::size_t>(r) * cols + begin + c] += up[static_cast<std::size_t>(r) * count + c];
    }
  });
}

Var gather_rows(Var a, std::span<const int> indices) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const int cols = av.cols();
  Tensor y = Tensor::zeros({static_cast<int>(indices.size()), cols});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int r = indices[i];
    if (r < 0 || r >= av.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy_n(av.data.begin() + static_cast<std::ptrdiff_t>(r) * cols, cols,
                y.data.begin() + static_cast<std::ptrdiff_t>(i) * cols);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  const std::size_t ai = a.id;
  return t.record(std::move(y), t.requires_grad(a), "gather_rows", [ai, idx, cols](Tape& tp, std::size_t self) {
    const auto& up = tp.node(self).grad;
    auto& g = tp.grad_buffer(ai);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t dst = static_cast<std::size_t>(idx[i]) * cols;
      const std::size_t src = i * cols;
      for (int c = 0; c < cols; ++c) g[dst + c] += up[src + c];
    }
  });
}

Var stop_gradient(Var a) { return a.tape->constant(a.value(), "stop_gradient"); }

// ---- normalisation ---------------------------------------------------------------

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const int rows = av.rows(), cols = av.cols();
  Tensor y = Tensor::zeros({rows, cols});
  for (int r = 0; r < rows; ++r) {
    Real m = av.at(r, 0);
    for (int c = 1; c < cols; ++c) m = std::max(m, av.at(r, c));
    Real s = 0;
    for (int c = 0; c < cols; ++c) s += (y.at(r, c) = std::exp(av.at(r, c) - m));
    for (int c = 0; c < cols; ++c) y.at(r, c) /= s;
  }
  const std::size_t ai = a.id;
  return t.record(std::move(y), t.requires_grad(a), "softmax", [ai, rows, cols](Tape& tp, std::size_t self) {
    const auto& up = tp.node(self).grad;
    const auto& Y = tp.node(self).value.data;
    auto& g = tp.grad_buffer(ai);
    for (int r = 0; r < rows; ++r) {
      const std::size_t o = static_cast<std::size_t>(r) * cols;
      Real dot = 0;
      for (int c = 0; c < cols; ++c) dot += up[o + c] * Y[o + c];
      for (int c = 0; c < cols; ++c) g[o + c] += Y[o + c] * (up[o + c] - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const int rows = av.rows(), cols = av.cols();
  Tensor y = Tensor::zeros({rows, cols});
  for (int r = 0; r < rows; ++r) {
    Real m = av.at(r, 0);
    for (int c = 1; c < cols; ++c) m = std::max(m, av.at(r, c));
    Real s = 0;
    for (int c = 0; c < cols; ++c) s += std::exp(av.at(r, c) - m);
    const Real lse = m + std::log(s);
    for (int c = 0; c < cols; ++c) y.at(r, c) = av.at(r, c) - lse;
  }
  const std::size_t ai = a.id;
  return t.record(std::move(y), t.requires_grad(a), "log_softmax", [ai, rows, cols](Tape& tp, std::size_t self) {
    const auto& up = tp.node(self).grad;
    const auto& Y = tp.node(self).value.data;
    auto& g = tp.grad_buffer(ai);
    for (int r = 0; r < rows; ++r) {
      const std::size_t o = static_cast<std::size_t>(r) * cols;
      Real total = 0;
      for (int c = 0; c < cols; ++c) total += up[o + c];
      for (int c = 0; c < cols; ++c) g[o + c] += up[o + c] - std::exp(Y[o + c]) * total;
    }
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, Real eps) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const int rows = xv.rows(), cols = xv.cols();
  if (static_cast<int>(gamma.value().size()) != cols || static_cast<int>(beta.value().size()) != cols) {
    throw ShapeError("layer_norm: gamma/beta width mismatch");
  }
  using RowMatrix = detail::RowMatrix;
  using RowMap = Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>;
  Tensor y = Tensor::zeros({rows, cols});
  // normalised values and inverse std, kept for backward
  auto xhat = std::make_shared<RowMatrix>(rows, cols);
  auto inv_std = std::make_shared<Eigen::Matrix<Real, Eigen::Dynamic, 1>>(rows);
  const detail::ConstRowMatrixMap X(xv.data.data(), rows, cols);
  const RowMap gm(gamma.value().data.data(), cols);
  const RowMap bt(beta.value().data.data(), cols);
  const auto mu = (detail::row_sums(X) / Real(cols)).eval();
  xhat->noalias() = X.colwise() - mu;
  *inv_std = ((detail::row_sums(xhat->array().square()).array() / Real(cols)) + eps).sqrt().inverse().matrix();
  *xhat = xhat->array().colwise() * inv_std->array();
  detail::RowMatrixMap(y.data.data(), rows, cols) = (xhat->array().rowwise() * gm.array()).rowwise() + bt.array();
  const std::size_t xi = x.id, gi = gamma.id, bi = beta.id;
  return t.record(std::move(y), any_requires({x, gamma, beta}), "layer_norm",
                  [xi, gi, bi, rows, cols, xhat, inv_std](Tape& tp, std::size_t self) {
                    const detail::ConstRowMatrixMap up(tp.node(self).grad.data(), rows, cols);
                    const RowMap gm(tp.node(gi).val().data.data(), cols);
                    using RowMut = Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>>;
                    if (tp.node(gi).requires_grad) {
                      RowMut(tp.grad_buffer(gi).data(), cols) += (up.array() * xhat->array()).colwise().sum().matrix();
                    }
                    if (tp.node(bi).requires_grad) RowMut(tp.grad_buffer(bi).data(), cols) += up.colwise().sum();
                    if (tp.node(xi).requires_grad) {
                      const auto dh = (up.array().rowwise() * gm.array()).eval();
                      const auto mean_dh = (detail::row_sums(dh).array() / Real(cols)).eval();
                      const auto mean_dh_h = (detail::row_sums(dh * xhat->array()).array() / Real(cols)).eval();
                      detail::RowMatrixMap(tp.grad_buffer(xi).data(), rows, cols).array() +=
                          ((dh.colwise() - mean_dh) - xhat->array().colwise() * mean_dh_h).colwise() * inv_std->array();
                    }
                  });
}

AttentionResult multi_head_attention(Var q, Var k, Var v, int heads, bool causal) {
  Tape& t = *q.tape;
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  detail::check_attention_shapes(qv.rows(), qv.cols(), kv.rows(), kv.cols(), vv.rows(), vv.cols(), heads, causal);
  const int tq = qv.rows(), tk = kv.rows(), d = qv.cols(), dv = vv.cols();
  Tensor weights = Tensor::zeros({heads * tq, tk});
  Tensor out = Tensor::zeros({tq, dv});
  detail::attention_kernel(qv.data.data(), kv.data.data(), vv.data.data(), tq, tk, d, dv, heads, causal,
                           weights.data.data(), out.data.data());
  auto w = std::make_shared<const Tensor>(weights);
  const std::size_t qi = q.id, ki = k.id, vi = v.id;
  Var o = t.record(std::move(out), any_requires({q, k, v}), "attention",
                   [qi, ki, vi, w, heads, tq, tk, d, dv](Tape& tp, std::size_t self) {
                     const auto& up = tp.node(self).grad;  // [tq, dv]
                     const auto& Q = tp.node(qi).val().data;
                     const auto& K = tp.node(ki).val().data;
                     const auto& V = tp.node(vi).val().data;
                     const bool gq = tp.node(qi).requires_grad;
                     const bool gk = tp.node(ki).requires_grad;
                     const bool gv = tp.node(vi).requires_grad;
                     Buffer* dQ = gq ? &tp.grad_buffer(qi) : nullptr;
                     Buffer* dK = gk ? &tp.grad_buffer(ki) : nullptr;
                     Buffer* dV = gv ? &tp.grad_buffer(vi) : nullptr;
                     const int dh = d / heads, dvh = dv / heads;
                     const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(dh));
                     using namespace detail;
                     RowMatrix dA(tq, tk);
                     for (int h = 0; h < heads; ++h) {
                       const ConstRowMatrixMap A(w->data.data() + static_cast<std::size_t>(h) * tq * tk, tq, tk);
                       const ConstHeadMap dO(up.data() + h * dvh, tq, dvh, Stride(dv));
                       const ConstHeadMap Vh(V.data() + h * dvh, tk, dvh, Stride(dv));
                       if (dV != nullptr) HeadMap(dV->data() + h * dvh, tk, dvh, Stride(dv)).noalias() += A.transpose() * dO;
                       if (dQ == nullptr && dK == nullptr) continue;
                       dA.noalias() = dO * Vh.transpose();
                       // Masked entries have A = 0, so their score gradient vanishes.
                       const auto dot = row_sums(dA.array() * A.array()).array().eval();
                       dA = (A.array() * (dA.array().colwise() - dot)) * inv_sqrt;
                       if (dQ != nullptr) {
                         HeadMap(dQ->data() + h * dh, tq, dh, Stride(d)).noalias() +=
                             dA * ConstHeadMap(K.data() + h * dh, tk, dh, Stride(d));
                       }
                       if (dK != nullptr) {
                         HeadMap(dK->data() + h * dh, tk, dh, Stride(d)).noalias() +=
                             dA.transpose() * ConstHeadMap(Q.data() + h * dh, tq, dh, Stride(d));
                       }
                     }
                   });
  return AttentionResult{o, std::move(weights)};
}

}  // namespace diff
PBRL_NAMESPACE_END
