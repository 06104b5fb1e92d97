// SPDX-License-Identifier: Apache-2.0
//
// Full-sequence forward pass with a cached trace, hand-derived reverse-mode
// gradients for every cell type, and a central-difference oracle.
#pragma once

#include <span>
#include <vector>

#include "fastgrnn/model.hpp"

namespace fastgrnn {

/// T inputs, each features x batch.
template <class S>
using Sequence = std::vector<Matrix<S>>;

template <class S>
struct ForwardTrace {
  Arch arch = Arch::FastGrnn;
  Sequence<S> inputs;                // x_1..x_T
  std::vector<Matrix<S>> hidden;     // h_0..h_T
  std::vector<Matrix<S>> pre;        // candidate pre-activation incl. bias (b or b_h)
  std::vector<Matrix<S>> gate_pre;   // FastGRNN gate pre-activation incl. b_z
  std::vector<Matrix<S>> gate;       // z_t (FastGRNN)
  std::vector<Matrix<S>> candidate;  // h~_t
  std::vector<Matrix<S>> deriv;      // D_t = sigma'(pre_t), as a dense features x batch array
  std::vector<Matrix<S>> gate_deriv; // sigma_g'(gate_pre_t)
  Matrix<S> W;                       // composed weights the pass used
  Matrix<S> U;
  Matrix<S> logits;

  Index steps() const { return static_cast<Index>(inputs.size()); }
  Index batch() const { return hidden.empty() ? 0 : hidden.front().cols(); }
};

template <class S>
struct ForwardResult {
  Matrix<S> logits;
  ForwardTrace<S> trace;
};

namespace detail {

template <class S>
void check_sequence(const Model<S>& m, const Sequence<S>& xs) {
  if (xs.empty()) throw DimensionError("forward_sequence: sequence length must be >= 1");
  const Index d = m.input_dim();
  const Index b = xs.front().cols();
  for (std::size_t t = 0; t < xs.size(); ++t) {
    if (xs[t].rows() != d || xs[t].cols() != b) {
      throw DimensionError("forward_sequence: input at step " + std::to_string(t + 1) + " is " +
                           shape_string(xs[t].rows(), xs[t].cols()) + ", expected " + std::to_string(d) + "x" +
                           std::to_string(b));
    }
  }
  if (m.classifier.weight.cols() != m.hidden_dim() || m.classifier.bias.size() != m.classifier.weight.rows()) {
    throw DimensionError("forward_sequence: classifier does not match hidden dimension");
  }
}

template <class S>
void check_finite_step(const Matrix<S>& h, std::size_t t) {
  if (!h.allFinite()) {
    throw NumericError("forward_sequence: non-finite hidden state at timestep " + std::to_string(t));
  }
}

}  // namespace detail

template <class S>
Matrix<S> classifier_logits(const Classifier<S>& c, const Matrix<S>& h) {
  Matrix<S> out = c.weight * h;
  out.colwise() += c.bias;
  return out;
}

/// Runs the cell over x_1..x_T from h_0 = 0 and applies the head to h_T.
template <class S>
ForwardResult<S> forward_sequence(const Model<S>& m, const Sequence<S>& xs) {
  detail::check_sequence(m, xs);
  const Index hidden = m.hidden_dim();
  const Index batch = xs.front().cols();
  const std::size_t T = xs.size();

  ForwardResult<S> res;
  ForwardTrace<S>& tr = res.trace;
  tr.arch = m.arch();
  tr.inputs = xs;
  tr.hidden.reserve(T + 1);
  tr.hidden.push_back(Matrix<S>::Zero(hidden, batch));
  tr.pre.reserve(T);
  tr.candidate.reserve(T);
  tr.deriv.reserve(T);

  std::visit(Overloaded{
                 [&](const RnnParams<S>& p) {
                   tr.W = p.W.composed();
                   tr.U = p.U.composed();
                   for (std::size_t t = 0; t < T; ++t) {
                     FastRnnStep<S> s = rnn_step_composed(p, tr.W, tr.U, xs[t], tr.hidden.back());
                     tr.deriv.push_back((S(1) - s.h_tilde.array().square()).matrix());
                     tr.pre.push_back(std::move(s.pre));
                     tr.candidate.push_back(std::move(s.h_tilde));
                     detail::check_finite_step(s.h, t + 1);
                     tr.hidden.push_back(std::move(s.h));
                   }
                 },
                 [&](const FastRnnParams<S>& p) {
                   tr.W = p.W.composed();
                   tr.U = p.U.composed();
                   for (std::size_t t = 0; t < T; ++t) {
                     FastRnnStep<S> s = fastrnn_step_composed(p, tr.W, tr.U, xs[t], tr.hidden.back());
                     tr.deriv.push_back(activate_derivative(p.nonlin, s.pre));
                     tr.pre.push_back(std::move(s.pre));
                     tr.candidate.push_back(std::move(s.h_tilde));
                     detail::check_finite_step(s.h, t + 1);
                     tr.hidden.push_back(std::move(s.h));
                   }
                 },
                 [&](const VectorFastRnnParams<S>& p) {
                   tr.W = p.W.composed();
                   tr.U = p.U.composed();
                   for (std::size_t t = 0; t < T; ++t) {
                     FastRnnStep<S> s = vector_fastrnn_step_composed(p, tr.W, tr.U, xs[t], tr.hidden.back());
                     tr.deriv.push_back(activate_derivative(p.nonlin, s.pre));
                     tr.pre.push_back(std::move(s.pre));
                     tr.candidate.push_back(std::move(s.h_tilde));
                     detail::check_finite_step(s.h, t + 1);
                     tr.hidden.push_back(std::move(s.h));
                   }
                 },
                 [&](const FastGrnnParams<S>& p) {
                   tr.W = p.W.composed();
                   tr.U = p.U.composed();
                   tr.gate_pre.reserve(T);
                   tr.gate.reserve(T);
                   tr.gate_deriv.reserve(T);
                   for (std::size_t t = 0; t < T; ++t) {
                     FastGrnnStep<S> s = fastgrnn_step_composed(p, tr.W, tr.U, xs[t], tr.hidden.back());
                     Matrix<S> cand_pre = s.pre;
                     cand_pre.colwise() += p.b_h;
                     Matrix<S> gate_pre = std::move(s.pre);
                     gate_pre.colwise() += p.b_z;
                     tr.deriv.push_back(activate_derivative(p.update_nonlin, cand_pre));
                     tr.gate_deriv.push_back(activate_derivative(p.gate_nonlin, gate_pre));
                     tr.pre.push_back(std::move(cand_pre));
                     tr.gate_pre.push_back(std::move(gate_pre));
                     tr.gate.push_back(std::move(s.z));
                     tr.candidate.push_back(std::move(s.h_tilde));
                     detail::check_finite_step(s.h, t + 1);
                     tr.hidden.push_back(std::move(s.h));
                   }
                 },
             },
             m.cell);

  tr.logits = classifier_logits(m.classifier, tr.hidden.back());
  res.logits = tr.logits;
  return res;
}

// -- loss -------------------------------------------------------------------

namespace detail {

inline void check_labels(std::span<const int> labels, Index batch, Index num_classes) {
  if (static_cast<Index>(labels.size()) != batch) {
    throw DimensionError("loss: " + std::to_string(labels.size()) + " labels for a batch of " + std::to_string(batch));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw std::invalid_argument("loss: label " + std::to_string(labels[i]) + " at position " + std::to_string(i) +
                                  " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

template <class S>
S log1p_exp(S x) {
  return x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace detail

/// Mean loss over the batch: softmax cross-entropy, or log(1 + exp(-y s))
/// with y = +-1 for the logistic head.
template <class S>
S loss(Head head, const Matrix<S>& logits, std::span<const int> labels) {
  const Index batch = logits.cols();
  detail::check_labels(labels, batch, head == Head::Logistic ? 2 : logits.rows());
  S total = S(0);
  for (Index j = 0; j < batch; ++j) {
    if (head == Head::Logistic) {
      const S y = labels[j] == 1 ? S(1) : S(-1);
      total += detail::log1p_exp(-y * logits(0, j));
    } else {
      const S mx = logits.col(j).maxCoeff();
      const S lse = mx + std::log((logits.col(j).array() - mx).exp().sum());
      total += lse - logits(labels[j], j);
    }
  }
  return total / static_cast<S>(batch);
}

/// d(mean loss)/d(logits).
template <class S>
Matrix<S> loss_gradient(Head head, const Matrix<S>& logits, std::span<const int> labels) {
  const Index batch = logits.cols();
  detail::check_labels(labels, batch, head == Head::Logistic ? 2 : logits.rows());
  Matrix<S> g(logits.rows(), batch);
  const S inv = S(1) / static_cast<S>(batch);
  for (Index j = 0; j < batch; ++j) {
    if (head == Head::Logistic) {
      const S y = labels[j] == 1 ? S(1) : S(-1);
      // d/ds log(1 + exp(-y s)) = -y * sigmoid(-y s)
      g(0, j) = -y * sigmoid(-y * logits(0, j)) * inv;
    } else {
      const S mx = logits.col(j).maxCoeff();
      Vector<S> p = (logits.col(j).array() - mx).exp().matrix();
      p /= p.sum();
      p(labels[j]) -= S(1);
      g.col(j) = p * inv;
    }
  }
  return g;
}

template <class S>
std::vector<int> predict_labels(Head head, const Matrix<S>& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Index j = 0; j < logits.cols(); ++j) {
    if (head == Head::Logistic) {
      out[j] = logits(0, j) > S(0) ? 1 : 0;
    } else {
      Index best = 0;
      logits.col(j).maxCoeff(&best);
      out[j] = static_cast<int>(best);
    }
  }
  return out;
}

// -- reverse mode -----------------------------------------------------------

struct BackwardOptions {
  /// Records ||dL/dh_t|| (Frobenius over the batch) for t = 1..T.
  bool record_state_gradients = false;
  /// Optional max-norm clip on the global gradient. Only honoured for the
  /// standard RNN.
  double clip_norm = 0.0;
};

template <class S>
struct BackwardResult {
  Gradients<S> grads;
  std::vector<S> state_gradient_norms;  // index t-1 holds ||dL/dh_t||
};

namespace detail {

template <class S>
void accumulate_weight_grad(Weight<S>& gw, const Weight<S>& w, const Matrix<S>& g_composed) {
  if (w.factored) {
    // W = L R^T: dL = G R, dR = G^T L
    gw.left = g_composed * w.right;
    gw.right = g_composed.transpose() * w.left;
  } else {
    gw.dense = g_composed;
  }
}

template <class S>
S sigmoid_grad_from_raw(S raw) {
  const S s = sigmoid(raw);
  return s * (S(1) - s);
}

template <class S>
void check_trace(const Model<S>& m, const ForwardTrace<S>& tr) {
  if (tr.arch != m.arch()) throw DimensionError("backward_sequence: trace architecture does not match parameters");
  const std::size_t T = tr.inputs.size();
  if (T == 0 || tr.hidden.size() != T + 1 || tr.pre.size() != T || tr.deriv.size() != T ||
      tr.candidate.size() != T) {
    throw DimensionError("backward_sequence: malformed trace");
  }
  if (tr.hidden.front().rows() != m.hidden_dim() || tr.inputs.front().rows() != m.input_dim() ||
      tr.W.rows() != m.hidden_dim() || tr.U.rows() != m.hidden_dim()) {
    throw DimensionError("backward_sequence: trace dimensions do not match parameters");
  }
  if (m.arch() == Arch::FastGrnn && (tr.gate.size() != T || tr.gate_deriv.size() != T)) {
    throw DimensionError("backward_sequence: FastGRNN trace lacks gates");
  }
}

}  // namespace detail

/// Exact gradients of the mean batch loss with respect to every trainable
/// tensor, including the raw (pre-sigmoid) gate scalars.
template <class S>
BackwardResult<S> backward_sequence(const Model<S>& m, const ForwardTrace<S>& tr, std::span<const int> labels,
                                    const BackwardOptions& opt = {}) {
  detail::check_trace(m, tr);
  const std::size_t T = tr.inputs.size();
  BackwardResult<S> res;
  res.grads = zeros_like(m);
  Gradients<S>& g = res.grads;

  const Matrix<S> dlogits = loss_gradient(m.classifier.head, tr.logits, labels);
  g.classifier.weight = dlogits * tr.hidden.back().transpose();
  g.classifier.bias = dlogits.rowwise().sum();
  Matrix<S> dh = m.classifier.weight.transpose() * dlogits;

  if (opt.record_state_gradients) res.state_gradient_norms.assign(T, S(0));

  Matrix<S> gW = Matrix<S>::Zero(tr.W.rows(), tr.W.cols());
  Matrix<S> gU = Matrix<S>::Zero(tr.U.rows(), tr.U.cols());

  std::visit(Overloaded{
                 [&](const RnnParams<S>& p) {
                   auto& gp = std::get<RnnParams<S>>(g.cell);
                   Vector<S> gb = Vector<S>::Zero(p.b.size());
                   for (std::size_t k = T; k-- > 0;) {
                     if (opt.record_state_gradients) res.state_gradient_norms[k] = dh.norm();
                     const Matrix<S> da = dh.cwiseProduct(tr.deriv[k]);
                     gW.noalias() += da * tr.inputs[k].transpose();
                     gU.noalias() += da * tr.hidden[k].transpose();
                     gb += da.rowwise().sum();
                     dh = tr.U.transpose() * da;
                   }
                   detail::accumulate_weight_grad(gp.W, p.W, gW);
                   detail::accumulate_weight_grad(gp.U, p.U, gU);
                   gp.b = gb;
                 },
                 [&](const FastRnnParams<S>& p) {
                   auto& gp = std::get<FastRnnParams<S>>(g.cell);
                   const S alpha = p.alpha();
                   const S beta = p.beta();
                   Vector<S> gb = Vector<S>::Zero(p.b.size());
                   S galpha = S(0);
                   S gbeta = S(0);
                   for (std::size_t k = T; k-- > 0;) {
                     if (opt.record_state_gradients) res.state_gradient_norms[k] = dh.norm();
                     galpha += dh.cwiseProduct(tr.candidate[k]).sum();
                     gbeta += dh.cwiseProduct(tr.hidden[k]).sum();
                     const Matrix<S> da = (alpha * dh).cwiseProduct(tr.deriv[k]);
                     gW.noalias() += da * tr.inputs[k].transpose();
                     gU.noalias() += da * tr.hidden[k].transpose();
                     gb += da.rowwise().sum();
                     dh = beta * dh + tr.U.transpose() * da;
                   }
                   detail::accumulate_weight_grad(gp.W, p.W, gW);
                   detail::accumulate_weight_grad(gp.U, p.U, gU);
                   gp.b = gb;
                   gp.alpha_raw = galpha * detail::sigmoid_grad_from_raw(p.alpha_raw);
                   gp.beta_raw = gbeta * detail::sigmoid_grad_from_raw(p.beta_raw);
                 },
                 [&](const VectorFastRnnParams<S>& p) {
                   auto& gp = std::get<VectorFastRnnParams<S>>(g.cell);
                   const Vector<S> alpha = p.alpha();
                   const Vector<S> beta = p.beta();
                   const S zeta = p.zeta();
                   Vector<S> gb = Vector<S>::Zero(p.b.size());
                   Vector<S> galpha = Vector<S>::Zero(alpha.size());
                   Vector<S> gbeta = Vector<S>::Zero(alpha.size());
                   for (std::size_t k = T; k-- > 0;) {
                     if (opt.record_state_gradients) res.state_gradient_norms[k] = dh.norm();
                     galpha += dh.cwiseProduct(tr.candidate[k]).rowwise().sum();
                     gbeta += dh.cwiseProduct(tr.hidden[k]).rowwise().sum();
                     const Matrix<S> da =
                         (dh.array().colwise() * alpha.array()).matrix().cwiseProduct(tr.deriv[k]);
                     gW.noalias() += da * tr.inputs[k].transpose();
                     gU.noalias() += da * tr.hidden[k].transpose();
                     gb += da.rowwise().sum();
                     dh = (dh.array().colwise() * beta.array()).matrix() + tr.U.transpose() * da;
                   }
                   detail::accumulate_weight_grad(gp.W, p.W, gW);
                   detail::accumulate_weight_grad(gp.U, p.U, gU);
                   gp.b = gb;
                   // beta_i = zeta (1 - alpha_i) + nu
                   const Vector<S> galpha_total = galpha - zeta * gbeta;
                   for (Index i = 0; i < alpha.size(); ++i) {
                     gp.alpha_raw(i) = galpha_total(i) * alpha(i) * (S(1) - alpha(i));
                   }
                   const S gzeta = gbeta.dot((Vector<S>::Ones(alpha.size()) - alpha));
                   const S gnu = gbeta.sum();
                   gp.zeta_raw = gzeta * detail::sigmoid_grad_from_raw(p.zeta_raw);
                   gp.nu_raw = gnu * detail::sigmoid_grad_from_raw(p.nu_raw);
                 },
                 [&](const FastGrnnParams<S>& p) {
                   auto& gp = std::get<FastGrnnParams<S>>(g.cell);
                   const S zeta = p.zeta();
                   const S nu = p.nu();
                   Vector<S> gbz = Vector<S>::Zero(p.b_z.size());
                   Vector<S> gbh = Vector<S>::Zero(p.b_h.size());
                   S gzeta = S(0);
                   S gnu = S(0);
                   for (std::size_t k = T; k-- > 0;) {
                     if (opt.record_state_gradients) res.state_gradient_norms[k] = dh.norm();
                     const auto z = tr.gate[k].array();
                     const auto ht = tr.candidate[k].array();
                     const auto hp = tr.hidden[k].array();
                     const auto dha = dh.array();
                     gzeta += (dha * (S(1) - z) * ht).sum();
                     gnu += (dha * ht).sum();
                     const Matrix<S> da_h = (dha * (zeta * (S(1) - z) + nu) * tr.deriv[k].array()).matrix();
                     const Matrix<S> da_z = (dha * (hp - zeta * ht) * tr.gate_deriv[k].array()).matrix();
                     const Matrix<S> ds = da_h + da_z;
                     gW.noalias() += ds * tr.inputs[k].transpose();
                     gU.noalias() += ds * tr.hidden[k].transpose();
                     gbh += da_h.rowwise().sum();
                     gbz += da_z.rowwise().sum();
                     dh = (dha * z).matrix() + tr.U.transpose() * ds;
                   }
                   detail::accumulate_weight_grad(gp.W, p.W, gW);
                   detail::accumulate_weight_grad(gp.U, p.U, gU);
                   gp.b_z = gbz;
                   gp.b_h = gbh;
                   gp.zeta_raw = gzeta * detail::sigmoid_grad_from_raw(p.zeta_raw);
                   gp.nu_raw = gnu * detail::sigmoid_grad_from_raw(p.nu_raw);
                 },
             },
             m.cell);

  if (opt.clip_norm > 0.0 && m.arch() == Arch::Rnn) {
    S sq = S(0);
    for_each_tensor(g, [&](const std::string&, auto t) { sq += t.squaredNorm(); });
    const S norm = std::sqrt(sq);
    if (norm > static_cast<S>(opt.clip_norm)) {
      const S f = static_cast<S>(opt.clip_norm) / norm;
      for_each_tensor(g, [&](const std::string&, auto t) { t *= f; });
    }
  }
  for_each_tensor(g, [&](const std::string& name, auto t) {
    if (!t.allFinite()) throw NumericError("backward_sequence: non-finite gradient for '" + name + "'");
  });
  return res;
}

// -- closed-form FastRNN gradients -------------------------------------------

template <class S>
struct FastRnnClosedForm {
  Matrix<S> dW;  // with respect to the composed W
  Matrix<S> dU;
  Vector<S> dv;
};

/// Evaluates the product-form expressions for dL/dW, dL/dU and dL/dv of a
/// single-sequence FastRNN with logistic head directly:
///   dL/dh_t = prod_{k=t}^{T-1} (beta I + alpha U^T D_{k+1}) grad_{h_T}L,
///   dL/dU   = alpha sum_t D_t dL/dh_t h_{t-1}^T  (dL/dW with x_t^T),
///   grad_{h_T}L = -c y v,  c = 1 / (1 + exp(y v^T h_T)),  dL/dv = -c y h_T.
/// Each product is formed explicitly, O(T^2) matrix products; it exists only
/// as an independent cross-check of backward_sequence.
template <class S>
FastRnnClosedForm<S> analytic_fastrnn_grads(const Model<S>& m, const ForwardTrace<S>& tr, int label) {
  if (m.arch() != Arch::FastRnn || tr.arch != Arch::FastRnn) {
    throw std::invalid_argument("analytic_fastrnn_grads: requires a FastRNN trace");
  }
  if (m.classifier.head != Head::Logistic) throw std::invalid_argument("analytic_fastrnn_grads: requires a logistic head");
  if (tr.batch() != 1) throw DimensionError("analytic_fastrnn_grads: single-sequence traces only");
  if (label != 0 && label != 1) throw std::invalid_argument("analytic_fastrnn_grads: label must be 0 or 1");
  const auto& p = std::get<FastRnnParams<S>>(m.cell);
  const S alpha = p.alpha();
  const S beta = p.beta();
  const Index T = tr.steps();
  const Index n = m.hidden_dim();
  const S y = label == 1 ? S(1) : S(-1);
  const Vector<S> v = m.classifier.weight.row(0).transpose();
  const Vector<S> hT = tr.hidden.back().col(0);
  const S score = v.dot(hT) + m.classifier.bias(0);
  const S c = S(1) / (S(1) + std::exp(y * score));
  const Vector<S> grad_hT = -c * y * v;

  FastRnnClosedForm<S> out;
  out.dv = -c * y * hT;
  out.dW = Matrix<S>::Zero(n, m.input_dim());
  out.dU = Matrix<S>::Zero(n, n);
  const Matrix<S> I = Matrix<S>::Identity(n, n);
  for (Index t = 1; t <= T; ++t) {
    Matrix<S> M = I;
    for (Index k = t; k <= T - 1; ++k) {
      const Matrix<S> Dk1 = tr.deriv[k].col(0).asDiagonal();  // D_{k+1}
      M = M * (alpha * tr.U.transpose() * Dk1 + beta * I);
    }
    const Matrix<S> Dt = tr.deriv[t - 1].col(0).asDiagonal();
    const Vector<S> left = alpha * Dt * M * grad_hT;
    out.dU += left * tr.hidden[t - 1].col(0).transpose();
    out.dW += left * tr.inputs[t - 1].col(0).transpose();
  }
  return out;
}

// -- finite differences -----------------------------------------------------

template <class S>
S sequence_loss(const Model<S>& m, const Sequence<S>& xs, std::span<const int> labels) {
  return loss(m.classifier.head, forward_sequence(m, xs).logits, labels);
}

/// Central differences (f(theta + eps) - f(theta - eps)) / (2 eps), one
/// scalar parameter at a time.
template <class S>
Gradients<S> finite_difference_oracle(const Model<S>& m, const Sequence<S>& xs, std::span<const int> labels,
                                      S eps) {
  if (!(eps > S(0))) throw std::invalid_argument("finite_difference_oracle: eps must be positive");
  Model<S> probe = m;
  Gradients<S> out = zeros_like(m);
  std::vector<Eigen::Map<Matrix<S>>> targets;
  for_each_tensor(out, [&](const std::string&, auto t) { targets.push_back(t); });
  std::size_t idx = 0;
  for_each_tensor(probe, [&](const std::string&, auto t) {
    auto& dst = targets[idx++];
    for (Index i = 0; i < t.rows(); ++i) {
      for (Index j = 0; j < t.cols(); ++j) {
        const S orig = t(i, j);
        t(i, j) = orig + eps;
        const S up = sequence_loss(probe, xs, labels);
        t(i, j) = orig - eps;
        const S down = sequence_loss(probe, xs, labels);
        t(i, j) = orig;
        dst(i, j) = (up - down) / (S(2) * eps);
      }
    }
  });
  return out;
}

/// max over entries of |a - b| / max(|a|, |b|, floor).
template <class S>
S max_relative_error(const Gradients<S>& a, const Gradients<S>& b, S floor = S(1e-6)) {
  S worst = S(0);
  Gradients<S> lhs = a;
  for_each_tensor_pair(lhs, b, [&](const std::string&, auto x, auto y) {
    for (Index i = 0; i < x.rows(); ++i)
      for (Index j = 0; j < x.cols(); ++j) {
        const S denom = std::max({std::abs(x(i, j)), std::abs(y(i, j)), floor});
        worst = std::max(worst, std::abs(x(i, j) - y(i, j)) / denom);
      }
  });
  return worst;
}

}  // namespace fastgrnn
