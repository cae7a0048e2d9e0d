#pragma once

#include <Eigen/Core>

#include "pbrl/diff/tensor.hpp"

PBRL_NAMESPACE_BEGIN
namespace diff {

struct AttentionOutput {
  Tensor output;   // [Tq, dv]
  Tensor weights;  // [heads, Tq, Tk]; each (head, query) row sums to 1
};

/// Multi-head scaled dot-product attention on already-projected inputs.
/// Head h uses column block h of queries/keys/values. Throws ShapeError when
/// the query/key widths differ, a width is not divisible by heads, or keys and
/// values disagree on length.
AttentionOutput attention_forward(const Tensor& queries, const Tensor& keys, const Tensor& values,
                                  int heads, bool causal = false);

namespace detail {

// One head's columns inside a row-major [rows, width] buffer.
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Stride = Eigen::OuterStride<>;
using HeadMap = Eigen::Map<RowMatrix, 0, Stride>;
using ConstHeadMap = Eigen::Map<const RowMatrix, 0, Stride>;
using RowMatrixMap = Eigen::Map<RowMatrix>;
using ConstRowMatrixMap = Eigen::Map<const RowMatrix>;
using ColumnVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

/// Sequential per-row sums. Eigen's vectorised reductions pick their
/// summation order from the buffer address, which breaks run-to-run
/// reproducibility.
template <class M>
ColumnVector row_sums(const M& m) {
  ColumnVector out(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Real s = 0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) s += m(r, c);
    out(r) = s;
  }
  return out;
}

void check_attention_shapes(int q_rows, int q_cols, int k_rows, int k_cols, int v_rows, int v_cols,
                            int heads, bool causal);

/// Fills weights (head-major [heads*Tq, Tk]) and output [Tq, dv].
void attention_kernel(const Real* q, const Real* k, const Real* v, int tq, int tk, int d, int dv,
                      int heads, bool causal, Real* weights, Real* output);

}  // namespace detail
}  // namespace diff
PBRL_NAMESPACE_END
