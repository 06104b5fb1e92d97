// SPDX-License-Identifier: Apache-2.0
//
// Low-rank composition, magnitude hard thresholding and support masks for
// the W / U factors.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>

#include "fastgrnn/model.hpp"

namespace fastgrnn {

using MaskArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Retained-weight fractions per factor. A missing rank means the weight is
/// dense ("full").
struct SparsityPlan {
  std::optional<Index> rank_w;
  std::optional<Index> rank_u;
  double s_w = 1.0;
  double s_u = 1.0;

  bool is_dense() const { return !rank_w && !rank_u && s_w >= 1.0 && s_u >= 1.0; }
};

/// ceil(s * n), guarded against s * n landing a hair above an integer.
inline Index sparsity_budget(double s, Index n) {
  if (!(s > 0.0 && s <= 1.0)) throw std::invalid_argument("sparsity fraction must lie in (0, 1], got " + std::to_string(s));
  const auto k = static_cast<Index>(std::ceil(s * static_cast<double>(n) - 1e-9));
  return std::clamp<Index>(k, 1, n);
}

/// Keep-set for one tensor, keyed by its for_each_tensor name.
using SupportMasks = std::map<std::string, MaskArray>;

template <class S>
struct Thresholded {
  Matrix<S> value;
  MaskArray mask;
};

/// Keeps the k largest-magnitude entries bit-exactly and zeroes the rest.
/// Equal magnitudes keep the earlier row-major position.
template <class Derived>
Thresholded<typename Derived::Scalar> hard_threshold(const Eigen::MatrixBase<Derived>& m, Index k) {
  using S = typename Derived::Scalar;
  const Index n = m.size();
  if (k < 1 || k > n) {
    throw std::invalid_argument("hard_threshold: k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  const Matrix<S> src = m;  // row-major storage fixes the linear order
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const S* data = src.data();
  auto before = [data](Index a, Index b) {
    const S ma = std::abs(data[a]);
    const S mb = std::abs(data[b]);
    return ma != mb ? ma > mb : a < b;
  };
  std::nth_element(order.begin(), order.begin() + (k - 1), order.end(), before);

  Thresholded<S> out;
  out.value = Matrix<S>::Zero(src.rows(), src.cols());
  out.mask = MaskArray::Constant(src.rows(), src.cols(), false);
  for (Index i = 0; i < k; ++i) {
    const Index idx = order[static_cast<std::size_t>(i)];
    out.value.data()[idx] = data[idx];
    out.mask.data()[idx] = true;
  }
  return out;
}

/// a * b^T for factors sharing the inner dimension.
template <class A, class B>
Matrix<typename A::Scalar> compose_lowrank(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("compose_lowrank: inner dimensions differ " + shape_string(a.rows(), a.cols()) + " vs " +
                         shape_string(b.rows(), b.cols()));
  }
  return a * b.transpose();
}

/// Zeroes the entries of t outside mask. t may be a matrix or an Eigen::Map.
template <class T>
void apply_mask(T&& t, const MaskArray& mask) {
  if (t.rows() != mask.rows() || t.cols() != mask.cols()) {
    throw DimensionError("apply_mask: tensor is " + shape_string(t.rows(), t.cols()) + ", mask is " +
                         shape_string(mask.rows(), mask.cols()));
  }
  for (Index i = 0; i < t.rows(); ++i)
    for (Index j = 0; j < t.cols(); ++j)
      if (!mask(i, j)) t(i, j) = 0;
}

inline bool is_compressible_tensor(const std::string& name) {
  return name == "W" || name == "W1" || name == "W2" || name == "U" || name == "U1" || name == "U2";
}

/// Zeroes entries outside the stored masks; tensors without a mask pass through.
template <class S>
void apply_masks(Model<S>& m, const SupportMasks& masks) {
  for_each_tensor(m, [&](const std::string& name, auto t) {
    const auto it = masks.find(name);
    if (it != masks.end()) apply_mask(t, it->second);
  });
}

inline Index count_nonzeros(const MaskArray& m) { return m.count(); }

template <class S>
std::map<std::string, Index> nonzeros_per_tensor(const Model<S>& m) {
  std::map<std::string, Index> out;
  for_each_tensor(m, [&](const std::string& name, auto t) {
    if (is_compressible_tensor(name)) out[name] = (t.array() != S(0)).count();
  });
  return out;
}

/// Throws unless the model's factorisation matches the plan's ranks.
template <class S>
void validate_plan(const Model<S>& m, const SparsityPlan& plan) {
  std::visit(
      [&](const auto& c) {
        auto check = [](const Weight<S>& w, const std::optional<Index>& r, const char* name) {
          if (r) {
            if (*r < 1 || *r > std::min(w.rows(), w.cols())) {
              throw DimensionError(std::string("sparsity plan: rank for ") + name + " is " + std::to_string(*r) +
                                   ", outside [1, " + std::to_string(std::min(w.rows(), w.cols())) + "]");
            }
            if (!w.factored || w.rank() != *r) {
              throw DimensionError(std::string("sparsity plan: ") + name + " is not factored with rank " +
                                   std::to_string(*r));
            }
          } else if (w.factored) {
            throw DimensionError(std::string("sparsity plan: ") + name + " is factored but the plan says full");
          }
        };
        check(c.W, plan.rank_w, "W");
        check(c.U, plan.rank_u, "U");
      },
      m.cell);
  (void)sparsity_budget(plan.s_w, 1);
  (void)sparsity_budget(plan.s_u, 1);
}

template <class S>
struct Projection {
  Model<S> model;
  SupportMasks masks;
};

/// Hard-thresholds every W/U factor (or dense W/U) to its budget. Biases,
/// gate scalars and the head are untouched. Tensors whose budget equals their
/// size get an all-true mask.
template <class S>
Projection<S> project_params(Model<S> m, const SparsityPlan& plan) {
  validate_plan(m, plan);
  Projection<S> out;
  for_each_tensor(m, [&](const std::string& name, auto t) {
    if (!is_compressible_tensor(name)) return;
    const double s = name[0] == 'W' ? plan.s_w : plan.s_u;
    const Index k = sparsity_budget(s, t.size());
    Thresholded<S> th = hard_threshold(t, k);
    t = th.value;
    out.masks.emplace(name, std::move(th.mask));
  });
  out.model = std::move(m);
  return out;
}

}  // namespace fastgrnn
