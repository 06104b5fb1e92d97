// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "fastgrnn/bptt.hpp"
#include "test_support.hpp"

namespace fastgrnn {
namespace {

using testing::random_model;
using testing::random_sequence;
using testing::RandomModelSpec;

MatrixD scalar(double v) { return MatrixD::Constant(1, 1, v); }

TEST(Forward, SingleStepEqualsCellPlusHead) {
  RandomModelSpec s;
  s.arch = Arch::FastRnn;
  s.T = 1;
  const ModelD m = random_model(s);
  const Sequence<double> xs = random_sequence(s.D, 1, 1, 3);
  const auto& p = std::get<FastRnnParams<double>>(m.cell);
  const auto step = fastrnn_step(p, xs[0], MatrixD::Zero(s.H, 1));
  const MatrixD expected = m.classifier.weight * step.h + m.classifier.bias;
  const auto fw = forward_sequence(m, xs);
  for (Index i = 0; i < s.L; ++i) EXPECT_NEAR(fw.logits(i, 0), expected(i, 0), 1e-15);
}

TEST(Forward, ZeroWeightsGiveHeadBias) {
  for (Arch a : {Arch::Rnn, Arch::FastRnn, Arch::FastRnnVector, Arch::FastGrnn}) {
    RandomModelSpec s;
    s.arch = a;
    ModelD m = random_model(s);
    for_each_tensor(m, [](const std::string& name, auto t) {
      if (name != "b_out") t.setZero();
    });
    const auto fw = forward_sequence(m, random_sequence(s.D, 3, 5, 1));
    for (Index j = 0; j < 3; ++j)
      for (Index i = 0; i < s.L; ++i) EXPECT_EQ(fw.logits(i, j), m.classifier.bias(i)) << to_string(a);
  }
}

TEST(Forward, FastGrnnMatchesUnrolledOracle) {
  RandomModelSpec s;
  s.arch = Arch::FastGrnn;
  s.D = 2;
  s.H = 3;
  s.L = 2;
  s.T = 3;
  const ModelD m = random_model(s);
  const Sequence<double> xs = random_sequence(2, 1, 3, 8);
  const auto& p = std::get<FastGrnnParams<double>>(m.cell);
  const MatrixD W = p.W.composed(), U = p.U.composed();
  const double zeta = 1 / (1 + std::exp(-p.zeta_raw)), nu = 1 / (1 + std::exp(-p.nu_raw));
  double h[3] = {0, 0, 0};
  for (int t = 0; t < 3; ++t) {
    double next[3];
    for (int i = 0; i < 3; ++i) {
      double a = 0;
      for (int k = 0; k < 2; ++k) a += W(i, k) * xs[t](k, 0);
      for (int k = 0; k < 3; ++k) a += U(i, k) * h[k];
      const double z = 1 / (1 + std::exp(-(a + p.b_z(i))));
      const double c = std::tanh(a + p.b_h(i));
      next[i] = (zeta * (1 - z) + nu) * c + z * h[i];
    }
    std::copy(next, next + 3, h);
  }
  const auto fw = forward_sequence(m, xs);
  for (int i = 0; i < 2; ++i) {
    double logit = m.classifier.bias(i);
    for (int k = 0; k < 3; ++k) logit += m.classifier.weight(i, k) * h[k];
    EXPECT_NEAR(fw.logits(i, 0), logit, 1e-12);
  }
}

TEST(Forward, TraceLayoutAndDerivatives) {
  RandomModelSpec s;
  s.arch = Arch::FastGrnn;
  const ModelD m = random_model(s);
  const auto fw = forward_sequence(m, random_sequence(s.D, 2, 7, 4));
  const auto& tr = fw.trace;
  EXPECT_EQ(tr.steps(), 7);
  EXPECT_EQ(tr.hidden.size(), 8u);
  EXPECT_EQ(tr.pre.size(), 7u);
  EXPECT_EQ(tr.gate.size(), 7u);
  EXPECT_EQ(tr.candidate.size(), 7u);
  EXPECT_EQ(tr.deriv.size(), 7u);
  EXPECT_EQ(tr.hidden[0], MatrixD::Zero(s.H, 2));
  for (std::size_t t = 0; t < 7; ++t) {
    EXPECT_EQ(tr.deriv[t], activate_derivative(Nonlin::Tanh, tr.pre[t]));
    EXPECT_EQ(tr.gate_deriv[t], activate_derivative(Nonlin::Sigmoid, tr.gate_pre[t]));
  }
}

TEST(Forward, NonFiniteStateNamesTimestep) {
  RandomModelSpec s;
  s.arch = Arch::FastRnn;
  s.nonlin = Nonlin::Relu;
  s.D = 2;
  s.H = 2;
  s.L = 2;
  ModelD m = random_model(s);
  auto& p = std::get<FastRnnParams<double>>(m.cell);
  p.W.dense.setConstant(1e200);
  p.U.dense.setConstant(1e200);
  p.alpha_raw = p.beta_raw = 40;
  Sequence<double> xs(5, MatrixD::Constant(2, 1, 1.0));
  try {
    forward_sequence(m, xs);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos) << e.what();
  }
}

TEST(Forward, ShapeErrors) {
  RandomModelSpec s;
  const ModelD m = random_model(s);
  EXPECT_THROW(forward_sequence(m, Sequence<double>{}), DimensionError);
  EXPECT_THROW(forward_sequence(m, random_sequence(s.D + 1, 1, 3, 0)), DimensionError);
}

TEST(Loss, UniformLogits) {
  const MatrixD logits = MatrixD::Constant(4, 1, 0.7);
  const std::vector<int> y = {2};
  EXPECT_NEAR(loss<double>(Head::Softmax, logits, y), std::log(4.0), 1e-15);
}

TEST(Loss, LogisticAtZeroScore) {
  const std::vector<int> y = {1};
  EXPECT_NEAR(loss<double>(Head::Logistic, scalar(0.0), y), std::log(2.0), 1e-15);
}

TEST(Loss, MatchesDirectFormula) {
  Rng rng(2);
  const MatrixD logits = normal_matrix<double>(5, 3, 2.0, rng);
  const std::vector<int> y = {0, 4, 2};
  double ref = 0;
  for (int j = 0; j < 3; ++j) {
    double z = 0;
    for (int i = 0; i < 5; ++i) z += std::exp(logits(i, j));
    ref += std::log(z) - logits(y[j], j);
  }
  EXPECT_NEAR(loss<double>(Head::Softmax, logits, y), ref / 3, 1e-13);
  const MatrixD s = normal_matrix<double>(1, 3, 2.0, rng);
  const std::vector<int> b = {0, 1, 1};
  double lref = 0;
  for (int j = 0; j < 3; ++j) lref += std::log(1 + std::exp(-(b[j] ? 1.0 : -1.0) * s(0, j)));
  EXPECT_NEAR(loss<double>(Head::Logistic, s, b), lref / 3, 1e-13);
}

TEST(Loss, InvalidLabelThrows) {
  const std::vector<int> y = {4};
  EXPECT_ANY_THROW(loss<double>(Head::Softmax, MatrixD::Zero(4, 1), y));
  const std::vector<int> neg = {-1};
  EXPECT_ANY_THROW(loss<double>(Head::Logistic, MatrixD::Zero(1, 1), neg));
}

TEST(Loss, PredictLabels) {
  MatrixD l(3, 2);
  l << 0.1, 5, 2, 5, -1, 0;
  EXPECT_EQ(predict_labels<double>(Head::Softmax, l), (std::vector<int>{1, 0}));
  MatrixD s(1, 3);
  s << -0.5, 0.0, 0.2;
  EXPECT_EQ(predict_labels<double>(Head::Logistic, s), (std::vector<int>{0, 0, 1}));
}

struct GradCase {
  Arch arch;
  Index rank_w, rank_u;
};

class GradientCheck : public ::testing::TestWithParam<GradCase> {};

TEST_P(GradientCheck, MatchesFiniteDifferences) {
  RandomModelSpec s;
  s.arch = GetParam().arch;
  s.rank_w = GetParam().rank_w;
  s.rank_u = GetParam().rank_u;
  s.seed = 1;
  const ModelD m = random_model(s);
  const Sequence<double> xs = random_sequence(s.D, 2, 6, 5);
  const std::vector<int> y = {2, 0};
  const auto fw = forward_sequence(m, xs);
  const auto bw = backward_sequence(m, fw.trace, y);
  const auto fd = finite_difference_oracle(m, xs, y, 1e-5);
  EXPECT_LT(max_relative_error(bw.grads, fd), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(AllCells, GradientCheck,
                         ::testing::Values(GradCase{Arch::Rnn, 0, 0}, GradCase{Arch::FastRnn, 0, 0},
                                           GradCase{Arch::FastRnnVector, 0, 0}, GradCase{Arch::FastGrnn, 0, 0},
                                           GradCase{Arch::FastGrnn, 2, 3}, GradCase{Arch::FastRnn, 3, 2}));

TEST(Backward, LogisticHeadGradientCheck) {
  RandomModelSpec s;
  s.arch = Arch::FastGrnn;
  s.L = 2;
  s.head = Head::Logistic;
  const ModelD m = random_model(s);
  const Sequence<double> xs = random_sequence(s.D, 3, 5, 9);
  const std::vector<int> y = {1, 0, 1};
  const auto bw = backward_sequence(m, forward_sequence(m, xs).trace, y);
  EXPECT_LT(max_relative_error(bw.grads, finite_difference_oracle(m, xs, y, 1e-5)), 1e-4);
}

TEST(Backward, SaturatedLossGivesZeroGradients) {
  RandomModelSpec s;
  s.arch = Arch::FastRnn;
  s.L = 2;
  s.head = Head::Logistic;
  ModelD m = random_model(s);
  m.classifier.bias(0) = 1000.0;  // c = 1 / (1 + exp(y s)) underflows to 0 for y = +1
  const Sequence<double> xs = random_sequence(s.D, 1, 4, 2);
  const std::vector<int> y = {1};
  const auto bw = backward_sequence(m, forward_sequence(m, xs).trace, y);
  for_each_tensor(bw.grads, [](const std::string& name, auto t) { EXPECT_EQ(t.cwiseAbs().maxCoeff(), 0.0) << name; });
}

TEST(Backward, HandExpansionScalarFastRnn) {
  // D = D^ = 1, T = 2, logistic head, tanh.
  FastRnnParams<double> p;
  p.W = Weight<double>::from_dense(scalar(0.7));
  p.U = Weight<double>::from_dense(scalar(-0.4));
  p.b = VectorD::Constant(1, 0.1);
  p.alpha_raw = -0.3;
  p.beta_raw = 1.2;
  p.nonlin = Nonlin::Tanh;
  ModelD m;
  m.cell = p;
  m.classifier.head = Head::Logistic;
  m.classifier.weight = scalar(1.3);
  m.classifier.bias = VectorD::Constant(1, -0.2);
  const double x1 = 0.9, x2 = -1.4, w = 0.7, u = -0.4, b = 0.1, v = 1.3, c0 = -0.2;
  const double al = 1 / (1 + std::exp(0.3)), be = 1 / (1 + std::exp(-1.2));
  const double a1 = w * x1 + b, h1 = al * std::tanh(a1);
  const double a2 = w * x2 + u * h1 + b, h2 = al * std::tanh(a2) + be * h1;
  const double y = 1.0;
  const double c = 1 / (1 + std::exp(y * (v * h2 + c0)));
  const double g2 = -c * y * v;
  const double d1 = 1 - std::tanh(a1) * std::tanh(a1), d2 = 1 - std::tanh(a2) * std::tanh(a2);
  const double g1 = (be + al * u * d2) * g2;
  const double dW = al * d2 * g2 * x2 + al * d1 * g1 * x1;
  const double dU = al * d2 * g2 * h1;
  const double dv = -c * y * h2;
  const Sequence<double> xs = {scalar(x1), scalar(x2)};
  const std::vector<int> label = {1};
  const auto bw = backward_sequence(m, forward_sequence(m, xs).trace, label);
  const auto& g = std::get<FastRnnParams<double>>(bw.grads.cell);
  EXPECT_NEAR(g.W.dense(0, 0), dW, 1e-10);
  EXPECT_NEAR(g.U.dense(0, 0), dU, 1e-10);
  EXPECT_NEAR(bw.grads.classifier.weight(0, 0), dv, 1e-10);
}

ModelD logistic_fastrnn(std::uint64_t seed) {
  RandomModelSpec s;
  s.arch = Arch::FastRnn;
  s.L = 2;
  s.head = Head::Logistic;
  s.seed = seed;
  return random_model(s);
}

TEST(Analytic, AgreesWithBackward) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelD m = logistic_fastrnn(seed);
    const Sequence<double> xs = random_sequence(4, 1, 8, seed + 100);
    const int label = static_cast<int>(seed % 2);
    const auto fw = forward_sequence(m, xs);
    const std::vector<int> y = {label};
    const auto bw = backward_sequence(m, fw.trace, y);
    const auto cf = analytic_fastrnn_grads(m, fw.trace, label);
    const auto& g = std::get<FastRnnParams<double>>(bw.grads.cell);
    EXPECT_LT((cf.dW - g.W.dense).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((cf.dU - g.U.dense).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((cf.dv - bw.grads.classifier.weight.row(0).transpose()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Analytic, ZeroAlphaKillsWeightGradients) {
  ModelD m = logistic_fastrnn(3);
  std::get<FastRnnParams<double>>(m.cell).alpha_raw = -800;  // sigmoid underflows to exactly 0
  const auto fw = forward_sequence(m, random_sequence(4, 1, 6, 1));
  const auto cf = analytic_fastrnn_grads(m, fw.trace, 1);
  EXPECT_EQ(cf.dW.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(cf.dU.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Analytic, DvAtZeroScore) {
  ModelD m = logistic_fastrnn(4);
  m.classifier.weight.setZero();
  m.classifier.bias.setZero();
  const auto fw = forward_sequence(m, random_sequence(4, 1, 6, 2));
  const auto cf = analytic_fastrnn_grads(m, fw.trace, 1);
  const VectorD hT = fw.trace.hidden.back().col(0);
  EXPECT_LT((cf.dv + 0.5 * hT).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Analytic, RejectsOtherCells) {
  RandomModelSpec s;
  s.arch = Arch::FastGrnn;
  s.L = 2;
  s.head = Head::Logistic;
  const ModelD m = random_model(s);
  const auto fw = forward_sequence(m, random_sequence(4, 1, 3, 2));
  EXPECT_THROW(analytic_fastrnn_grads(m, fw.trace, 1), std::invalid_argument);
}

TEST(FiniteDifference, ErrorShrinksQuadratically) {
  const ModelD m = logistic_fastrnn(6);
  const Sequence<double> xs = random_sequence(4, 1, 5, 6);
  const std::vector<int> y = {1};
  const auto exact = backward_sequence(m, forward_sequence(m, xs).trace, y).grads;
  auto abs_err = [&](double eps) {
    const auto fd = finite_difference_oracle(m, xs, y, eps);
    double worst = 0;
    Gradients<double> a = exact;
    for_each_tensor_pair(a, fd, [&](const std::string&, auto p, auto q) {
      worst = std::max(worst, (p - q).cwiseAbs().maxCoeff());
    });
    return worst;
  };
  const double e2 = abs_err(1e-2), e3 = abs_err(1e-3);
  // Central differences: halving-by-ten of eps cuts the truncation error ~100x.
  EXPECT_GT(e2 / e3, 30.0);
  EXPECT_LT(e2 / e3, 300.0);
}

TEST(FiniteDifference, InteriorStepIsMostAccurate) {
  const ModelD m = logistic_fastrnn(7);
  const Sequence<double> xs = random_sequence(4, 1, 10, 7);
  const std::vector<int> y = {0};
  const auto exact = backward_sequence(m, forward_sequence(m, xs).trace, y).grads;
  auto err = [&](double eps) { return max_relative_error(exact, finite_difference_oracle(m, xs, y, eps)); };
  const double big = err(1e-4), mid = err(1e-5), small = err(1e-6);
  EXPECT_LT(mid, big);
  EXPECT_LT(mid, small);
}

TEST(FiniteDifference, RejectsBadEpsilon) {
  const ModelD m = logistic_fastrnn(1);
  const std::vector<int> y = {0};
  EXPECT_THROW(finite_difference_oracle(m, random_sequence(4, 1, 2, 0), y, 0.0), std::invalid_argument);
}

TEST(Backward, BatchGradientIsMean) {
  RandomModelSpec s;
  s.arch = Arch::FastGrnn;
  const ModelD m = random_model(s);
  const Sequence<double> xs = random_sequence(s.D, 2, 4, 3);
  const std::vector<int> y = {1, 2};
  const auto both = backward_sequence(m, forward_sequence(m, xs).trace, y).grads;
  Gradients<double> mean = zeros_like(m);
  for (Index j = 0; j < 2; ++j) {
    Sequence<double> one;
    for (const auto& x : xs) one.push_back(x.col(j));
    const std::vector<int> yj = {y[static_cast<std::size_t>(j)]};
    const auto g = backward_sequence(m, forward_sequence(m, one).trace, yj).grads;
    for_each_tensor_pair(mean, g, [](const std::string&, auto acc, auto v) { acc += 0.5 * v; });
  }
  EXPECT_LT(max_relative_error(both, mean), 1e-12);
}

TEST(Backward, Deterministic) {
  RandomModelSpec s;
  s.arch = Arch::FastGrnn;
  s.rank_w = 2;
  s.rank_u = 3;
  const ModelD m = random_model(s);
  const Sequence<double> xs = random_sequence(s.D, 4, 9, 3);
  const std::vector<int> y = {1, 2, 0, 0};
  const auto a = backward_sequence(m, forward_sequence(m, xs).trace, y).grads;
  const auto b = backward_sequence(m, forward_sequence(m, xs).trace, y).grads;
  Gradients<double> lhs = a;
  for_each_tensor_pair(lhs, b, [](const std::string& name, auto p, auto q) {
    EXPECT_EQ(0, std::memcmp(p.data(), q.data(), sizeof(double) * static_cast<std::size_t>(p.size()))) << name;
  });
}

TEST(Backward, StateGradientNormsHaveOneEntryPerStep) {
  RandomModelSpec s;
  s.arch = Arch::Rnn;
  const ModelD m = random_model(s);
  BackwardOptions opt;
  opt.record_state_gradients = true;
  const std::vector<int> y = {1};
  const auto bw = backward_sequence(m, forward_sequence(m, random_sequence(s.D, 1, 12, 1)).trace, y, opt);
  EXPECT_EQ(bw.state_gradient_norms.size(), 12u);
}

TEST(Backward, ClipOnlyAppliesToRnn) {
  for (Arch a : {Arch::Rnn, Arch::FastRnn}) {
    RandomModelSpec s;
    s.arch = a;
    const ModelD m = random_model(s);
    const auto fw = forward_sequence(m, random_sequence(s.D, 1, 5, 1));
    const std::vector<int> y = {0};
    BackwardOptions clip;
    clip.clip_norm = 1e-3;
    const auto free = backward_sequence(m, fw.trace, y).grads;
    const auto clipped = backward_sequence(m, fw.trace, y, clip).grads;
    double n = 0;
    for_each_tensor(clipped, [&](const std::string&, auto t) { n += t.squaredNorm(); });
    if (a == Arch::Rnn) {
      EXPECT_NEAR(std::sqrt(n), 1e-3, 1e-12);
    } else {
      EXPECT_LT(max_relative_error(free, clipped), 1e-15);
    }
  }
}

}  // namespace
}  // namespace fastgrnn
