// SPDX-License-Identifier: Apache-2.0
//
// Single-timestep state updates. Every step function takes a batch of column
// vectors (features x batch) so the same kernel serves single sequences and
// mini-batches.
#pragma once

#include <algorithm>
#include <string>
#include <type_traits>
#include <utility>

#include "fastgrnn/core.hpp"

namespace fastgrnn {

/// A transition matrix stored either densely or as left * right^T.
template <class S>
struct Weight {
  Matrix<S> dense;
  Matrix<S> left;   // rows x rank
  Matrix<S> right;  // cols x rank
  bool factored = false;

  static Weight from_dense(Matrix<S> m) {
    Weight w;
    w.dense = std::move(m);
    return w;
  }

  static Weight from_factors(Matrix<S> l, Matrix<S> r) {
    if (l.cols() != r.cols()) {
      throw DimensionError("low-rank factors: inner dimensions differ " + shape_string(l.rows(), l.cols()) + " vs " +
                           shape_string(r.rows(), r.cols()));
    }
    Weight w;
    w.left = std::move(l);
    w.right = std::move(r);
    w.factored = true;
    return w;
  }

  Index rows() const { return factored ? left.rows() : dense.rows(); }
  Index cols() const { return factored ? right.rows() : dense.cols(); }
  Index rank() const { return factored ? left.cols() : std::min(dense.rows(), dense.cols()); }

  Matrix<S> composed() const {
    if (!factored) return dense;
    return left * right.transpose();
  }

  template <class T>
  Weight<T> cast() const {
    Weight<T> w;
    w.factored = factored;
    w.dense = dense.template cast<T>();
    w.left = left.template cast<T>();
    w.right = right.template cast<T>();
    return w;
  }
};

template <class S>
struct RnnParams {
  using Scalar = S;

  Weight<S> W;  // hidden x input
  Weight<S> U;  // hidden x hidden
  Vector<S> b;
};

template <class S>
struct FastRnnParams {
  using Scalar = S;

  Weight<S> W;
  Weight<S> U;
  Vector<S> b;
  S alpha_raw = S(0);
  S beta_raw = S(0);
  Nonlin nonlin = Nonlin::Tanh;

  S alpha() const { return sigmoid(alpha_raw); }
  S beta() const { return sigmoid(beta_raw); }
};

template <class S>
struct VectorFastRnnParams {
  using Scalar = S;

  Weight<S> W;
  Weight<S> U;
  Vector<S> b;
  Vector<S> alpha_raw;
  S zeta_raw = S(0);
  S nu_raw = S(0);
  Nonlin nonlin = Nonlin::Tanh;

  Vector<S> alpha() const { return alpha_raw.unaryExpr([](S v) { return sigmoid(v); }); }
  S zeta() const { return sigmoid(zeta_raw); }
  S nu() const { return sigmoid(nu_raw); }
  /// beta_i = zeta * (1 - alpha_i) + nu
  Vector<S> beta() const {
    const S z = zeta();
    const S n = nu();
    return alpha().unaryExpr([z, n](S a) { return z * (S(1) - a) + n; });
  }
};

template <class S>
struct FastGrnnParams {
  using Scalar = S;

  Weight<S> W;
  Weight<S> U;
  Vector<S> b_z;
  Vector<S> b_h;
  S zeta_raw = S(0);
  S nu_raw = S(0);
  Nonlin gate_nonlin = Nonlin::Sigmoid;
  Nonlin update_nonlin = Nonlin::Tanh;

  S zeta() const { return sigmoid(zeta_raw); }
  S nu() const { return sigmoid(nu_raw); }
};

template <class S>
struct FastRnnStep {
  Matrix<S> h;
  Matrix<S> h_tilde;
  Matrix<S> pre;  // W x + U h_prev + b
};

template <class S>
struct FastGrnnStep {
  Matrix<S> h;
  Matrix<S> z;
  Matrix<S> h_tilde;
  Matrix<S> pre;  // W x + U h_prev, shared by gate and candidate
};

namespace detail {

template <class P>
void check_step_shapes(const P& p, Index x_rows, Index h_rows, Index x_cols, Index h_cols, const char* what) {
  if (x_rows != p.W.cols() || h_rows != p.U.rows() || p.U.rows() != p.U.cols() || p.W.rows() != p.U.rows() ||
      x_cols != h_cols) {
    throw DimensionError(std::string(what) + ": x is " + shape_string(x_rows, x_cols) + ", h is " +
                         shape_string(h_rows, h_cols) + ", W is " + shape_string(p.W.rows(), p.W.cols()) +
                         ", U is " + shape_string(p.U.rows(), p.U.cols()));
  }
}

template <class S>
void check_bias(const Vector<S>& b, Index hidden, const char* what) {
  if (b.size() != hidden) {
    throw DimensionError(std::string(what) + ": bias has length " + std::to_string(b.size()) + ", expected " +
                         std::to_string(hidden));
  }
}

template <class S>
using Arg = std::type_identity_t<Matrix<S>>;

}  // namespace detail

// -- standard RNN -----------------------------------------------------------

template <class S>
FastRnnStep<S> rnn_step_composed(const RnnParams<S>& p, const Matrix<S>& W, const Matrix<S>& U,
                                 const detail::Arg<S>& x, const detail::Arg<S>& h_prev) {
  detail::check_step_shapes(p, x.rows(), h_prev.rows(), x.cols(), h_prev.cols(), "rnn_step");
  detail::check_bias(p.b, p.U.rows(), "rnn_step");
  FastRnnStep<S> out;
  out.pre = W * x + U * h_prev;
  out.pre.colwise() += p.b;
  out.h_tilde = out.pre.array().tanh().matrix();
  out.h = out.h_tilde;
  return out;
}

/// h_t = tanh(W x_t + U h_{t-1} + b)
template <class S>
Matrix<S> rnn_step(const RnnParams<S>& p, const detail::Arg<S>& x, const detail::Arg<S>& h_prev) {
  return rnn_step_composed(p, p.W.composed(), p.U.composed(), x, h_prev).h;
}

// -- FastRNN ----------------------------------------------------------------

template <class S>
FastRnnStep<S> fastrnn_step_composed(const FastRnnParams<S>& p, const Matrix<S>& W, const Matrix<S>& U,
                                     const detail::Arg<S>& x, const detail::Arg<S>& h_prev) {
  detail::check_step_shapes(p, x.rows(), h_prev.rows(), x.cols(), h_prev.cols(), "fastrnn_step");
  detail::check_bias(p.b, p.U.rows(), "fastrnn_step");
  FastRnnStep<S> out;
  out.pre = W * x + U * h_prev;
  out.pre.colwise() += p.b;
  out.h_tilde = activate(p.nonlin, out.pre);
  out.h = p.alpha() * out.h_tilde + p.beta() * h_prev;
  return out;
}

/// h~ = sigma(W x + U h_prev + b); h = alpha * h~ + beta * h_prev.
template <class S>
FastRnnStep<S> fastrnn_step(const FastRnnParams<S>& p, const detail::Arg<S>& x, const detail::Arg<S>& h_prev) {
  return fastrnn_step_composed(p, p.W.composed(), p.U.composed(), x, h_prev);
}

// -- vector FastRNN ---------------------------------------------------------

template <class S>
FastRnnStep<S> vector_fastrnn_step_composed(const VectorFastRnnParams<S>& p, const Matrix<S>& W, const Matrix<S>& U,
                                            const detail::Arg<S>& x, const detail::Arg<S>& h_prev) {
  detail::check_step_shapes(p, x.rows(), h_prev.rows(), x.cols(), h_prev.cols(), "vector_fastrnn_step");
  detail::check_bias(p.b, p.U.rows(), "vector_fastrnn_step");
  detail::check_bias(p.alpha_raw, p.U.rows(), "vector_fastrnn_step (alpha)");
  FastRnnStep<S> out;
  out.pre = W * x + U * h_prev;
  out.pre.colwise() += p.b;
  out.h_tilde = activate(p.nonlin, out.pre);
  const Vector<S> alpha = p.alpha();
  const Vector<S> beta = p.beta();
  out.h = (out.h_tilde.array().colwise() * alpha.array() + h_prev.array().colwise() * beta.array()).matrix();
  return out;
}

/// h = alpha (.) h~ + (zeta (1 - alpha) + nu) (.) h_prev with a per-coordinate alpha.
template <class S>
FastRnnStep<S> vector_fastrnn_step(const VectorFastRnnParams<S>& p, const detail::Arg<S>& x,
                                   const detail::Arg<S>& h_prev) {
  return vector_fastrnn_step_composed(p, p.W.composed(), p.U.composed(), x, h_prev);
}

// -- FastGRNN ---------------------------------------------------------------

template <class S>
FastGrnnStep<S> fastgrnn_step_composed(const FastGrnnParams<S>& p, const Matrix<S>& W, const Matrix<S>& U,
                                       const detail::Arg<S>& x, const detail::Arg<S>& h_prev) {
  detail::check_step_shapes(p, x.rows(), h_prev.rows(), x.cols(), h_prev.cols(), "fastgrnn_step");
  detail::check_bias(p.b_z, p.U.rows(), "fastgrnn_step (b_z)");
  detail::check_bias(p.b_h, p.U.rows(), "fastgrnn_step (b_h)");
  FastGrnnStep<S> out;
  out.pre = W * x + U * h_prev;
  Matrix<S> gate_pre = out.pre;
  gate_pre.colwise() += p.b_z;
  Matrix<S> cand_pre = out.pre;
  cand_pre.colwise() += p.b_h;
  out.z = activate(p.gate_nonlin, gate_pre);
  out.h_tilde = activate(p.update_nonlin, cand_pre);
  const S zeta = p.zeta();
  const S nu = p.nu();
  out.h = ((zeta * (S(1) - out.z.array()) + nu) * out.h_tilde.array() + out.z.array() * h_prev.array()).matrix();
  return out;
}

/// z = sigma(W x + U h_prev + b_z); h~ = tanh(W x + U h_prev + b_h);
/// h = (zeta (1 - z) + nu) (.) h~ + z (.) h_prev.
template <class S>
FastGrnnStep<S> fastgrnn_step(const FastGrnnParams<S>& p, const detail::Arg<S>& x, const detail::Arg<S>& h_prev) {
  return fastgrnn_step_composed(p, p.W.composed(), p.U.composed(), x, h_prev);
}

// -- initialisation ---------------------------------------------------------

struct GateInit {
  double alpha_raw = 0.0;
  double beta_raw = 0.0;
  double zeta_raw = 1.0;
  double nu_raw = -4.0;
};

/// alpha = 1/T and beta = 1 - 1/T in raw (logit) space, clamped to [-6, 6].
inline GateInit default_gate_init(Index horizon) {
  const double t = static_cast<double>(std::max<Index>(horizon, 2));
  GateInit g;
  g.alpha_raw = std::clamp(logit(1.0 / t), -6.0, 6.0);
  g.beta_raw = std::clamp(logit(1.0 - 1.0 / t), -6.0, 6.0);
  return g;
}

/// Best rank-r factorisation left * right^T of m via SVD, splitting the
/// singular values evenly between the factors.
template <class S>
Weight<S> truncated_svd_factor(const Matrix<S>& m, Index rank) {
  if (rank < 1 || rank > std::min(m.rows(), m.cols())) {
    throw DimensionError("truncated_svd_factor: rank " + std::to_string(rank) + " out of range for " +
                         shape_string(m.rows(), m.cols()));
  }
  const Matrix<double> md = m.template cast<double>();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(md, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd root = svd.singularValues().head(rank).cwiseSqrt();
  Matrix<double> left = svd.matrixU().leftCols(rank) * root.asDiagonal();
  Matrix<double> right = svd.matrixV().leftCols(rank) * root.asDiagonal();
  return Weight<S>::from_factors(left.template cast<S>(), right.template cast<S>());
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) dense init, optionally factored.
/// rank == 0 keeps the matrix dense.
template <class S>
Weight<S> init_weight(Index rows, Index cols, Index rank, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  Matrix<S> dense = uniform_matrix<S>(rows, cols, bound, rng);
  if (rank == 0) return Weight<S>::from_dense(std::move(dense));
  return truncated_svd_factor(dense, rank);
}

}  // namespace fastgrnn
