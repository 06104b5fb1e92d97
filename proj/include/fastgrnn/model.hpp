// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <variant>

#include "fastgrnn/cells.hpp"

namespace fastgrnn {

enum class Arch : std::uint8_t { Rnn = 0, FastRnn = 1, FastRnnVector = 2, FastGrnn = 3 };

inline const char* to_string(Arch a) {
  switch (a) {
    case Arch::Rnn: return "rnn";
    case Arch::FastRnn: return "fastrnn";
    case Arch::FastRnnVector: return "fastrnn-vec";
    case Arch::FastGrnn: return "fastgrnn";
  }
  return "?";
}

inline Arch parse_arch(const std::string& name) {
  if (name == "rnn") return Arch::Rnn;
  if (name == "fastrnn") return Arch::FastRnn;
  if (name == "fastrnn-vec") return Arch::FastRnnVector;
  if (name == "fastgrnn") return Arch::FastGrnn;
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

enum class Head : std::uint8_t { Softmax = 0, Logistic = 1 };

/// Affine head on the final hidden state. Softmax: weight is L x hidden.
/// Logistic (binary, labels 0/1 mapped to y = -1/+1): weight is 1 x hidden.
template <class S>
struct Classifier {
  Head head = Head::Softmax;
  Matrix<S> weight;
  Vector<S> bias;

  Index num_classes() const { return head == Head::Logistic ? 2 : weight.rows(); }
};

template <class S>
using CellParams = std::variant<RnnParams<S>, FastRnnParams<S>, VectorFastRnnParams<S>, FastGrnnParams<S>>;

template <class S>
struct Model {
  CellParams<S> cell;
  Classifier<S> classifier;

  Arch arch() const { return static_cast<Arch>(cell.index()); }
  Index input_dim() const {
    return std::visit([](const auto& c) { return c.W.cols(); }, cell);
  }
  Index hidden_dim() const {
    return std::visit([](const auto& c) { return c.U.rows(); }, cell);
  }
  Index num_classes() const { return classifier.num_classes(); }
};

/// Gradients mirror the parameter bundle exactly.
template <class S>
using Gradients = Model<S>;

using ModelD = Model<double>;
using ModelF = Model<float>;
using GradientsD = Gradients<double>;

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

// -- tensor visitation ------------------------------------------------------
//
// for_each_tensor(model, f) calls f(name, map) for every trainable tensor in
// a fixed order, where map is an Eigen::Map over the storage (scalars appear
// as 1x1). Order and names are the serialisation and optimizer contract.

namespace detail {

template <class S>
using MapOf = std::conditional_t<std::is_const_v<S>, Eigen::Map<const Matrix<std::remove_const_t<S>>>,
                                 Eigen::Map<Matrix<std::remove_const_t<S>>>>;

template <class M>
auto as_map(M& m) {
  using S = std::conditional_t<std::is_const_v<M>, const typename std::remove_const_t<M>::Scalar,
                               typename std::remove_const_t<M>::Scalar>;
  return MapOf<S>(m.data(), m.rows(), m.cols());
}

template <class S>
auto scalar_map(S& s) {
  return MapOf<S>(&s, 1, 1);
}

template <class W, class F>
void visit_weight(W& w, const char* name, F& f) {
  if (w.factored) {
    f(std::string(name) + "1", as_map(w.left));
    f(std::string(name) + "2", as_map(w.right));
  } else {
    f(std::string(name), as_map(w.dense));
  }
}

template <class C, class F>
void visit_cell(C& c, F& f) {
  using P = std::remove_const_t<C>;
  using S = typename P::Scalar;
  visit_weight(c.W, "W", f);
  visit_weight(c.U, "U", f);
  if constexpr (std::is_same_v<P, FastGrnnParams<S>>) {
    f(std::string("b_z"), as_map(c.b_z));
    f(std::string("b_h"), as_map(c.b_h));
    f(std::string("zeta_raw"), scalar_map(c.zeta_raw));
    f(std::string("nu_raw"), scalar_map(c.nu_raw));
  } else {
    f(std::string("b"), as_map(c.b));
    if constexpr (std::is_same_v<P, FastRnnParams<S>>) {
      f(std::string("alpha_raw"), scalar_map(c.alpha_raw));
      f(std::string("beta_raw"), scalar_map(c.beta_raw));
    } else if constexpr (std::is_same_v<P, VectorFastRnnParams<S>>) {
      f(std::string("alpha_raw"), as_map(c.alpha_raw));
      f(std::string("zeta_raw"), scalar_map(c.zeta_raw));
      f(std::string("nu_raw"), scalar_map(c.nu_raw));
    }
  }
}

}  // namespace detail

template <class M, class F>
void for_each_tensor(M& model, F&& f) {
  std::visit([&](auto& c) { detail::visit_cell(c, f); }, model.cell);
  f(std::string("W_out"), detail::as_map(model.classifier.weight));
  f(std::string("b_out"), detail::as_map(model.classifier.bias));
}

/// Visits the tensors of two identically shaped bundles side by side.
template <class S, class F>
void for_each_tensor_pair(Model<S>& a, const Model<S>& b, F&& f) {
  std::vector<Eigen::Map<const Matrix<S>>> rhs;
  for_each_tensor(b, [&](const std::string&, auto m) { rhs.push_back(m); });
  std::size_t i = 0;
  for_each_tensor(a, [&](const std::string& name, auto m) {
    if (i >= rhs.size() || rhs[i].rows() != m.rows() || rhs[i].cols() != m.cols()) {
      throw DimensionError("parameter bundles differ at tensor '" + name + "'");
    }
    f(name, m, rhs[i]);
    ++i;
  });
  if (i != rhs.size()) throw DimensionError("parameter bundles differ in tensor count");
}

template <class S>
Model<S> zeros_like(const Model<S>& m) {
  Model<S> z = m;
  for_each_tensor(z, [](const std::string&, auto t) { t.setZero(); });
  return z;
}

template <class S>
Index parameter_count(const Model<S>& m) {
  Index n = 0;
  for_each_tensor(m, [&](const std::string&, auto t) { n += t.size(); });
  return n;
}

template <class T, class S>
Model<T> cast_model(const Model<S>& m) {
  Model<T> out;
  out.classifier.head = m.classifier.head;
  out.classifier.weight = m.classifier.weight.template cast<T>();
  out.classifier.bias = m.classifier.bias.template cast<T>();
  std::visit(Overloaded{
                 [&](const RnnParams<S>& c) {
                   RnnParams<T> r;
                   r.W = c.W.template cast<T>();
                   r.U = c.U.template cast<T>();
                   r.b = c.b.template cast<T>();
                   out.cell = std::move(r);
                 },
                 [&](const FastRnnParams<S>& c) {
                   FastRnnParams<T> r;
                   r.W = c.W.template cast<T>();
                   r.U = c.U.template cast<T>();
                   r.b = c.b.template cast<T>();
                   r.alpha_raw = static_cast<T>(c.alpha_raw);
                   r.beta_raw = static_cast<T>(c.beta_raw);
                   r.nonlin = c.nonlin;
                   out.cell = std::move(r);
                 },
                 [&](const VectorFastRnnParams<S>& c) {
                   VectorFastRnnParams<T> r;
                   r.W = c.W.template cast<T>();
                   r.U = c.U.template cast<T>();
                   r.b = c.b.template cast<T>();
                   r.alpha_raw = c.alpha_raw.template cast<T>();
                   r.zeta_raw = static_cast<T>(c.zeta_raw);
                   r.nu_raw = static_cast<T>(c.nu_raw);
                   r.nonlin = c.nonlin;
                   out.cell = std::move(r);
                 },
                 [&](const FastGrnnParams<S>& c) {
                   FastGrnnParams<T> r;
                   r.W = c.W.template cast<T>();
                   r.U = c.U.template cast<T>();
                   r.b_z = c.b_z.template cast<T>();
                   r.b_h = c.b_h.template cast<T>();
                   r.zeta_raw = static_cast<T>(c.zeta_raw);
                   r.nu_raw = static_cast<T>(c.nu_raw);
                   r.gate_nonlin = c.gate_nonlin;
                   r.update_nonlin = c.update_nonlin;
                   out.cell = std::move(r);
                 },
             },
             m.cell);
  return out;
}

// -- construction -----------------------------------------------------------

struct ModelShape {
  Arch arch = Arch::FastGrnn;
  Index input_dim = 1;
  Index hidden_dim = 1;
  Index num_classes = 2;
  Index rank_w = 0;  // 0 = full (dense)
  Index rank_u = 0;
  Index horizon = 2;  // sequence length T, sets the alpha/beta init
  Nonlin nonlin = Nonlin::Tanh;          // FastRNN variants; FastGRNN candidate
  Nonlin gate_nonlin = Nonlin::Sigmoid;  // FastGRNN gate
  Head head = Head::Softmax;
};

template <class S>
Model<S> init_model(const ModelShape& shape, Rng& rng) {
  if (shape.input_dim < 1 || shape.hidden_dim < 1) throw DimensionError("init_model: dimensions must be positive");
  if (shape.head == Head::Softmax && shape.num_classes < 2) throw DimensionError("init_model: softmax needs L >= 2");
  if (shape.head == Head::Logistic && shape.num_classes != 2) throw DimensionError("init_model: logistic head is binary");
  const Index d = shape.input_dim;
  const Index h = shape.hidden_dim;
  Rng wrng = rng.split(1);
  Rng urng = rng.split(2);
  Rng crng = rng.split(3);
  Weight<S> W = init_weight<S>(h, d, shape.rank_w, wrng);
  Weight<S> U = init_weight<S>(h, h, shape.rank_u, urng);
  const GateInit g = default_gate_init(shape.horizon);

  Model<S> m;
  switch (shape.arch) {
    case Arch::Rnn: {
      RnnParams<S> p{std::move(W), std::move(U), Vector<S>::Zero(h)};
      m.cell = std::move(p);
      break;
    }
    case Arch::FastRnn: {
      FastRnnParams<S> p;
      p.W = std::move(W);
      p.U = std::move(U);
      p.b = Vector<S>::Zero(h);
      p.alpha_raw = static_cast<S>(g.alpha_raw);
      p.beta_raw = static_cast<S>(g.beta_raw);
      p.nonlin = shape.nonlin;
      m.cell = std::move(p);
      break;
    }
    case Arch::FastRnnVector: {
      VectorFastRnnParams<S> p;
      p.W = std::move(W);
      p.U = std::move(U);
      p.b = Vector<S>::Zero(h);
      p.alpha_raw = Vector<S>::Constant(h, static_cast<S>(g.alpha_raw));
      p.zeta_raw = static_cast<S>(g.zeta_raw);
      p.nu_raw = static_cast<S>(g.nu_raw);
      p.nonlin = shape.nonlin;
      m.cell = std::move(p);
      break;
    }
    case Arch::FastGrnn: {
      FastGrnnParams<S> p;
      p.W = std::move(W);
      p.U = std::move(U);
      p.b_z = Vector<S>::Zero(h);
      p.b_h = Vector<S>::Zero(h);
      p.zeta_raw = static_cast<S>(g.zeta_raw);
      p.nu_raw = static_cast<S>(g.nu_raw);
      p.gate_nonlin = shape.gate_nonlin;
      p.update_nonlin = shape.nonlin;
      m.cell = std::move(p);
      break;
    }
  }
  m.classifier.head = shape.head;
  const Index rows = shape.head == Head::Logistic ? 1 : shape.num_classes;
  m.classifier.weight = uniform_matrix<S>(rows, h, 1.0 / std::sqrt(static_cast<double>(h)), crng);
  m.classifier.bias = Vector<S>::Zero(rows);
  return m;
}

/// Nonlinearities a model evaluates, for checks such as "trained with
/// piecewise-linear activations only".
template <class S>
std::vector<Nonlin> nonlinearities(const Model<S>& m) {
  return std::visit(Overloaded{
                        [](const RnnParams<S>&) { return std::vector<Nonlin>{Nonlin::Tanh}; },
                        [](const FastRnnParams<S>& c) { return std::vector<Nonlin>{c.nonlin}; },
                        [](const VectorFastRnnParams<S>& c) { return std::vector<Nonlin>{c.nonlin}; },
                        [](const FastGrnnParams<S>& c) {
                          return std::vector<Nonlin>{c.gate_nonlin, c.update_nonlin};
                        },
                    },
                    m.cell);
}

}  // namespace fastgrnn
