#include "pbrl/diff/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

PBRL_NAMESPACE_BEGIN
namespace diff {
namespace detail {

void check_attention_shapes(int q_rows, int q_cols, int k_rows, int k_cols, int v_rows, int v_cols,
                            int heads, bool causal) {
  if (heads <= 0) throw ShapeError("attention needs at least one head");
  if (q_cols != k_cols) {
    throw ShapeError("query width " + std::to_string(q_cols) + " != key width " + std::to_string(k_cols));
  }
  if (q_cols % heads != 0 || v_cols % heads != 0) {
    throw ShapeError("attention widths (" + std::to_string(q_cols) + ", " + std::to_string(v_cols) +
                     ") not divisible by " + std::to_string(heads) + " heads");
  }
  if (k_rows != v_rows) {
    throw ShapeError("key length " + std::to_string(k_rows) + " != value length " + std::to_string(v_rows));
  }
  if (k_rows == 0 || q_rows == 0) throw ShapeError("attention over an empty sequence");
  if (causal && q_rows != k_rows) throw ShapeError("causal attention needs equal query and key lengths");
}

void attention_kernel(const Real* q, const Real* k, const Real* v, int tq, int tk, int d, int dv,
                      int heads, bool causal, Real* weights, Real* output) {
  const int dh = d / heads;
  const int dvh = dv / heads;
  const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(dh));
  for (int h = 0; h < heads; ++h) {
    const ConstHeadMap qh(q + h * dh, tq, dh, Stride(d));
    const ConstHeadMap kh(k + h * dh, tk, dh, Stride(d));
    const ConstHeadMap vh(v + h * dvh, tk, dvh, Stride(dv));
    RowMatrixMap w(weights + static_cast<std::size_t>(h) * tq * tk, tq, tk);
    w.noalias() = (qh * kh.transpose()) * inv_sqrt;
    for (int i = 0; i < tq; ++i) {
      const int visible = causal ? i + 1 : tk;
      auto row = w.row(i).head(visible);
      const Real max_score = row.maxCoeff();
      // Scalar exp: Eigen's packet exp differs from std::exp on peeled elements.
      Real total = 0;
      for (int j = 0; j < visible; ++j) total += (row(j) = std::exp(row(j) - max_score));
      row /= total;
      w.row(i).tail(tk - visible).setZero();
    }
    HeadMap(output + h * dvh, tq, dvh, Stride(dv)).noalias() = w * vh;
  }
}

}  // namespace detail

AttentionOutput attention_forward(const Tensor& queries, const Tensor& keys, const Tensor& values,
                                  int heads, bool causal) {
  detail::check_attention_shapes(queries.rows(), queries.cols(), keys.rows(), keys.cols(), values.rows(),
                                 values.cols(), heads, causal);
  const int tq = queries.rows();
  const int tk = keys.rows();
  AttentionOutput out{Tensor::zeros({tq, values.cols()}), Tensor::zeros({heads, tq, tk})};
  detail::attention_kernel(queries.data.data(), keys.data.data(), values.data.data(), tq, tk,
                           queries.cols(), values.cols(), heads, causal, out.weights.data.data(),
                           out.output.data.data());
  return out;
}

}  // namespace diff
PBRL_NAMESPACE_END
