// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "fastgrnn/piecewise.hpp"
#include "fastgrnn/rng.hpp"

namespace fastgrnn {

using Index = Eigen::Index;

/// Row-major dense matrix. Batched activations are stored feature-major:
/// one column per sequence in the batch.
template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatrixD = Matrix<double>;
using VectorD = Vector<double>;
using MatrixF = Matrix<float>;
using VectorF = Vector<float>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <class A, class B>
void require_same_shape(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.rows(), a.cols()) +
                         " vs " + shape_string(b.rows(), b.cols()));
  }
}

/// Rejects NaN/Inf in externally supplied tensors.
template <class Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
  if (!m.derived().allFinite()) {
    throw NumericError(std::string(what) + ": non-finite entry");
  }
}

template <class A, class B>
auto matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  using S = typename A::Scalar;
  static_assert(std::is_same_v<S, typename B::Scalar>, "matmul: scalar types differ");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.rows(), a.cols()) + " * " +
                         shape_string(b.rows(), b.cols()));
  }
  return Matrix<S>(a * b);
}

template <class A, class B>
auto add(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  require_same_shape(a, b, "add");
  return a + b;
}

template <class A, class B>
auto sub(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  require_same_shape(a, b, "sub");
  return a - b;
}

template <class A, class B>
auto hadamard(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  require_same_shape(a, b, "hadamard");
  return a.cwiseProduct(b);
}

template <class A>
auto scale(const Eigen::MatrixBase<A>& a, typename A::Scalar s) {
  return a * s;
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

enum class Nonlin : std::uint8_t { Tanh = 0, Sigmoid = 1, Relu = 2, HardTanh = 3, HardSigmoid = 4 };

inline const char* to_string(Nonlin n) {
  switch (n) {
    case Nonlin::Tanh: return "tanh";
    case Nonlin::Sigmoid: return "sigmoid";
    case Nonlin::Relu: return "relu";
    case Nonlin::HardTanh: return "hard_tanh";
    case Nonlin::HardSigmoid: return "hard_sigmoid";
  }
  return "?";
}

inline Nonlin parse_nonlin(const std::string& name) {
  if (name == "tanh") return Nonlin::Tanh;
  if (name == "sigmoid") return Nonlin::Sigmoid;
  if (name == "relu") return Nonlin::Relu;
  if (name == "hard_tanh" || name == "quant_tanh") return Nonlin::HardTanh;
  if (name == "hard_sigmoid" || name == "quant_sigmoid") return Nonlin::HardSigmoid;
  throw std::invalid_argument("unknown nonlinearity '" + name + "'");
}

inline bool is_piecewise_linear(Nonlin n) {
  return n == Nonlin::HardTanh || n == Nonlin::HardSigmoid;
}

template <class S>
S sigmoid(S x) {
  // Split on sign so exp never overflows.
  if (x >= S(0)) {
    const S e = std::exp(-x);
    return S(1) / (S(1) + e);
  }
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <class S>
S logit(S p) {
  return std::log(p / (S(1) - p));
}

template <std::floating_point S>
S activate(Nonlin kind, S x) {
  switch (kind) {
    case Nonlin::Tanh: return std::tanh(x);
    case Nonlin::Sigmoid: return sigmoid(x);
    case Nonlin::Relu: return x > S(0) ? x : S(0);
    case Nonlin::HardTanh: return hard_tanh(x);
    case Nonlin::HardSigmoid: return hard_sigmoid(x);
  }
  return x;
}

/// Derivative with respect to the pre-activation. Kinks (ReLU at 0, the hard
/// variants at +-1) take the value 0.
template <std::floating_point S>
S activate_derivative(Nonlin kind, S x) {
  switch (kind) {
    case Nonlin::Tanh: {
      const S t = std::tanh(x);
      return S(1) - t * t;
    }
    case Nonlin::Sigmoid: {
      const S s = sigmoid(x);
      return s * (S(1) - s);
    }
    case Nonlin::Relu: return x > S(0) ? S(1) : S(0);
    case Nonlin::HardTanh: return hard_tanh_derivative(x);
    case Nonlin::HardSigmoid: return hard_sigmoid_derivative(x);
  }
  return S(0);
}

template <class Derived>
Matrix<typename Derived::Scalar> activate(Nonlin kind, const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([kind](S v) { return activate(kind, v); });
}

template <class Derived>
Matrix<typename Derived::Scalar> activate_derivative(Nonlin kind, const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([kind](S v) { return activate_derivative(kind, v); });
}

// ---------------------------------------------------------------------------
// Spectral norm by power iteration on m^T m.

struct SpectralNormResult {
  double value = 0.0;
  double achieved_tolerance = 0.0;
  int iterations = 0;
  bool converged = false;
};

template <class Derived>
SpectralNormResult spectral_norm_detailed(const Eigen::MatrixBase<Derived>& m, double rel_tol = 1e-9,
                                          int max_iterations = 10000) {
  using S = typename Derived::Scalar;
  require_finite(m, "spectral_norm");
  SpectralNormResult out;
  if (m.size() == 0 || m.cwiseAbs().maxCoeff() == S(0)) {
    out.converged = true;
    return out;
  }
  const Matrix<double> a = m.template cast<double>();
  const Matrix<double> gram = a.transpose() * a;
  // Fixed pseudo-random start so no structured matrix can be orthogonal to it by accident.
  Rng rng(0x5eed5eedULL);
  Vector<double> v(gram.cols());
  for (Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(0.5, 1.5);
  v.normalize();
  double estimate = 0.0;
  for (int it = 1; it <= max_iterations; ++it) {
    Vector<double> w = gram * v;
    const double next = v.dot(w);  // Rayleigh quotient, estimates sigma_max^2
    const double norm = w.norm();
    out.iterations = it;
    if (norm == 0.0) {
      estimate = 0.0;
      out.converged = true;
      break;
    }
    w /= norm;
    const double change = std::abs(next - estimate) / std::max(next, 1e-300);
    estimate = next;
    v = std::move(w);
    out.achieved_tolerance = change;
    if (it > 1 && change < rel_tol) {
      out.converged = true;
      break;
    }
  }
  out.value = std::sqrt(std::max(estimate, 0.0));
  return out;
}

template <class Derived>
double spectral_norm(const Eigen::MatrixBase<Derived>& m) {
  const SpectralNormResult r = spectral_norm_detailed(m);
  if (!r.converged) {
    throw NumericError("spectral_norm: power iteration did not converge after " + std::to_string(r.iterations) +
                       " iterations (achieved relative tolerance " + std::to_string(r.achieved_tolerance) + ")");
  }
  return r.value;
}

/// Uniform(-bound, bound) entries drawn in row-major order.
template <class S>
Matrix<S> uniform_matrix(Index rows, Index cols, double bound, Rng& rng) {
  Matrix<S> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(rng.uniform(-bound, bound));
  return m;
}

template <class S>
Matrix<S> normal_matrix(Index rows, Index cols, double stddev, Rng& rng) {
  Matrix<S> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(stddev * rng.normal());
  return m;
}

}  // namespace fastgrnn
