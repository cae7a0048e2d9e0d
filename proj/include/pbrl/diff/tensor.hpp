#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pbrl/core/config.hpp"
#include "pbrl/core/errors.hpp"

PBRL_NAMESPACE_BEGIN
namespace diff {

/// Storage with a fixed base alignment. Eigen's vector kernels peel a
/// different number of leading scalars depending on the address, which
/// changes rounding; a fixed alignment keeps results a function of the
/// inputs alone.
using Buffer = std::vector<Real, Eigen::aligned_allocator<Real>>;

/// Dense row-major tensor. Every op in this library works on rank-2 views;
/// a scalar is shape {1, 1}.
struct Tensor {
  std::vector<int> shape;
  Buffer data;
  /// Empty when no gradient is attached; otherwise data.size() entries.
  Buffer grad;

  Tensor() = default;
  Tensor(std::vector<int> s, Buffer d) : shape(std::move(s)), data(std::move(d)) { check(); }
  Tensor(std::vector<int> s, const std::vector<Real>& d) : shape(std::move(s)), data(d.begin(), d.end()) { check(); }
  Tensor(std::vector<int> s, std::initializer_list<Real> d) : shape(std::move(s)), data(d) { check(); }

  void check() const {
    if (numel_of(shape) != data.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape product " + std::to_string(numel_of(shape)));
    }
  }

  static Tensor zeros(std::vector<int> s) {
    const auto n = numel_of(s);
    return Tensor(std::move(s), Buffer(n, Real(0)));
  }
  static Tensor filled(std::vector<int> s, Real value) {
    const auto n = numel_of(s);
    return Tensor(std::move(s), Buffer(n, value));
  }
  static Tensor scalar(Real v) { return Tensor({1, 1}, {v}); }
  static Tensor row(const std::vector<Real>& values) {
    const int n = static_cast<int>(values.size());
    return Tensor({1, n}, values);
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  }

  std::size_t size() const { return data.size(); }
  int rows() const { return shape.size() < 2 ? 1 : shape[0]; }
  int cols() const { return shape.empty() ? 1 : shape.back(); }
  Real& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  Real at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }
  Real item() const { return data.at(0); }

  bool valid() const { return numel_of(shape) == data.size() && (grad.empty() || grad.size() == data.size()); }
};

/// A named trainable tensor owned by a model.
struct Parameter {
  std::string name;
  Tensor value;
};

using ParameterList = std::vector<Parameter*>;
using ConstParameterList = std::vector<const Parameter*>;

/// Throws ConfigError when two parameters share a name.
void check_unique_names(const ConstParameterList& params);

inline ConstParameterList as_const(const ParameterList& params) {
  return ConstParameterList(params.begin(), params.end());
}

std::size_t parameter_count(const ConstParameterList& params);

}  // namespace diff
PBRL_NAMESPACE_END
