// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fastgrnn/diagnostics.hpp"
#include "test_support.hpp"

namespace fastgrnn {
namespace {

std::vector<VectorD> random_diagonals(Index n, Index T, Rng& rng) {
  std::vector<VectorD> d;
  for (Index k = 0; k < T; ++k) {
    VectorD v(n);
    for (Index i = 0; i < n; ++i) v(i) = rng.uniform();
    d.push_back(v);
  }
  return d;
}

TEST(BuildM, EmptyProductIsIdentity) {
  Rng rng(1);
  const MatrixD U = normal_matrix<double>(4, 4, 1.0, rng);
  const auto d = random_diagonals(4, 5, rng);
  EXPECT_TRUE(build_M(U, d, 0.3, 0.7, 5).isApprox(MatrixD::Identity(4, 4)));
}

TEST(BuildM, SingleFactor) {
  Rng rng(2);
  const MatrixD U = normal_matrix<double>(3, 3, 1.0, rng);
  const auto d = random_diagonals(3, 2, rng);
  // t = 1, T = 2: one factor alpha U^T D_2 + beta I.
  const MatrixD expect = 0.4 * U.transpose() * d[1].asDiagonal() + 0.6 * MatrixD::Identity(3, 3);
  EXPECT_LT((build_M(U, d, 0.4, 0.6, 1) - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(BuildM, MatchesNaiveTripleLoopOracle) {
  Rng rng(3);
  const Index n = 5, T = 7;
  const MatrixD U = normal_matrix<double>(n, n, 0.5, rng);
  const auto d = random_diagonals(n, T, rng);
  const double a = 0.2, b = 0.9;
  std::vector<std::vector<double>> M(n, std::vector<double>(n, 0.0));
  for (Index i = 0; i < n; ++i) M[i][i] = 1.0;
  for (Index k = 2; k <= T - 1; ++k) {
    std::vector<std::vector<double>> F(n, std::vector<double>(n, 0.0));
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) F[i][j] = a * U(j, i) * d[k](j) + (i == j ? b : 0.0);
    std::vector<std::vector<double>> P(n, std::vector<double>(n, 0.0));
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        for (Index l = 0; l < n; ++l) P[i][j] += M[i][l] * F[l][j];
    M = P;
  }
  const MatrixD got = build_M(U, d, a, b, 2);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) EXPECT_NEAR(got(i, j), M[i][j], 1e-12);
}

TEST(BuildM, RejectsBadShapes) {
  Rng rng(4);
  const MatrixD U = normal_matrix<double>(3, 3, 1.0, rng);
  const auto d = random_diagonals(3, 4, rng);
  EXPECT_THROW(build_M(U, d, 0.5, 0.5, 0), DimensionError);
  EXPECT_THROW(build_M(U, d, 0.5, 0.5, 5), DimensionError);
  EXPECT_THROW(build_M(normal_matrix<double>(3, 2, 1.0, rng), d, 0.5, 0.5, 1), DimensionError);
  EXPECT_THROW(build_M(U, random_diagonals(2, 4, rng), 0.5, 0.5, 1), DimensionError);
}

TEST(Bound, WorkedExample) {
  const MatrixD U = 0.5 * MatrixD::Identity(2, 2);
  const std::vector<VectorD> d(3, VectorD::Ones(2));
  // q = (0.5 / 0.5) * 0.5, bound = (1.5 / 0.5)^2.
  EXPECT_NEAR(condition_bound(U, d, 0.5, 0.5, 1), 9.0, 1e-12);
  EXPECT_NEAR(empirical_condition(build_M(U, d, 0.5, 0.5, 1)), 1.0, 1e-12);
}

TEST(Bound, DegenerateCases) {
  Rng rng(5);
  const MatrixD U = normal_matrix<double>(4, 4, 1.0, rng);
  const auto d = random_diagonals(4, 6, rng);
  EXPECT_EQ(condition_bound(U, d, 0.0, 1.0, 1), 1.0);
  EXPECT_TRUE(std::isinf(condition_bound(U, d, 0.5, 0.0, 1)));
  EXPECT_TRUE(std::isinf(condition_bound(10.0 * U, std::vector<VectorD>(6, VectorD::Ones(4)), 0.5, 0.5, 1)));
  EXPECT_EQ(condition_bound(U, d, 0.5, 0.5, 6), 1.0);
}

TEST(Bound, EmpiricalConditionNeverExceedsBound) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(8));
    const Index T = 2 + static_cast<Index>(rng.below(30));
    const Index t = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(T)));
    const MatrixD U = normal_matrix<double>(n, n, rng.uniform(0.1, 2.0), rng);
    const auto d = random_diagonals(n, T, rng);
    const double alpha = rng.uniform(0.0, 0.2);
    const double beta = rng.uniform(0.5, 1.0);
    const double bound = condition_bound(U, d, alpha, beta, t);
    const double kappa = empirical_condition(build_M(U, d, alpha, beta, t));
    EXPECT_GE(kappa, 1.0 - 1e-12);
    if (std::isfinite(bound)) {
      EXPECT_LE(kappa, bound * (1.0 + 1e-9)) << "trial " << trial;
    }
  }
}

TEST(EmpiricalCondition, SingularAndKnownMatrices) {
  MatrixD s(2, 2);
  s << 1, 2, 2, 4;
  EXPECT_TRUE(std::isinf(empirical_condition(s)));
  MatrixD g(2, 2);
  g << 3, 0, 0, 0.5;
  EXPECT_NEAR(empirical_condition(g), 6.0, 1e-12);
  EXPECT_THROW(empirical_condition(MatrixD(2, 3)), DimensionError);
}

TEST(ConditionStudy, DefaultAlphaGivesFiniteBound) {
  ConditionInstance c;
  c.hidden = 12;
  c.T = 40;
  c.u_norm = 1.5;
  c.seed = 3;
  const ConditioningReport r = condition_study(c);
  EXPECT_FALSE(r.vacuous);
  EXPECT_NEAR(r.alpha + r.beta, 1.0, 1e-15);
  EXPECT_EQ(r.transfer_norms.size(), 39u);
  EXPECT_EQ(r.gradient_norms.size(), 40u);
  EXPECT_GE(r.kappa, 1.0 - 1e-12);
  EXPECT_LE(r.kappa, r.bound * (1.0 + 1e-9));
  const double maxnorm = *std::max_element(r.transfer_norms.begin(), r.transfer_norms.end());
  EXPECT_NEAR(r.alpha * 40.0 * maxnorm, 1.0, 1e-12);
  const double q = r.alpha / r.beta * maxnorm;
  EXPECT_NEAR(r.bound, std::pow((1.0 + q) / (1.0 - q), 39.0), 1e-9 * r.bound);
}

TEST(ConditionStudy, ZeroAlphaIsPerfectlyConditioned) {
  ConditionInstance c;
  c.alpha = 0.0;
  c.beta = 1.0;
  const ConditioningReport r = condition_study(c);
  EXPECT_EQ(r.bound, 1.0);
  EXPECT_NEAR(r.kappa, 1.0, 1e-12);
}

TEST(ConditionStudy, LargeAlphaIsVacuous) {
  ConditionInstance c;
  c.u_norm = 3.0;
  c.alpha = 0.9;
  c.beta = 0.1;
  const ConditioningReport r = condition_study(c);
  EXPECT_TRUE(r.vacuous);
  EXPECT_TRUE(std::isinf(r.bound));
}

TEST(ConditionStudy, JsonRoundTripKeepsInfinity) {
  ConditioningReport r;
  r.T = 5;
  r.t = 2;
  r.alpha = 0.25;
  r.beta = 0.75;
  r.transfer_norms = {0.5, 1.25, 2.0};
  r.bound = std::numeric_limits<double>::infinity();
  r.kappa = 17.5;
  r.vacuous = true;
  r.gradient_norms = {1, 2, 3, 4, 5};
  const ConditioningReport b = conditioning_report_from_json(to_json(r));
  EXPECT_EQ(b.T, 5);
  EXPECT_EQ(b.t, 2);
  EXPECT_EQ(b.transfer_norms, r.transfer_norms);
  EXPECT_TRUE(std::isinf(b.bound));
  EXPECT_EQ(b.kappa, 17.5);
  EXPECT_TRUE(b.vacuous);
  EXPECT_EQ(b.gradient_norms, r.gradient_norms);
}

TEST(Spectrum, SingleStepHasOneEntry) {
  SpectrumSpec s;
  s.T = 1;
  const auto v = random_gradient_spectrum(s);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_GT(v[0], 0.0);
  EXPECT_EQ(spectrum_ratio(v), 1.0);
}

TEST(Spectrum, RatioDefinition) {
  EXPECT_EQ(spectrum_ratio({2.0, 8.0, 4.0}), 4.0);
  EXPECT_TRUE(std::isinf(spectrum_ratio({0.0, 1.0})));
  EXPECT_THROW(spectrum_ratio({}), std::invalid_argument);
}

TEST(Spectrum, TanhRnnVanishesWhileFastRnnStaysFlat) {
  SpectrumSpec rnn;
  rnn.arch = Arch::Rnn;
  rnn.hidden = 32;
  rnn.T = 100;
  rnn.u_norm = 1.5;
  SpectrumSpec fast = rnn;
  fast.arch = Arch::FastRnn;
  double worst_rnn = std::numeric_limits<double>::infinity();
  double worst_fast = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    rnn.seed = fast.seed = seed;
    worst_rnn = std::min(worst_rnn, spectrum_ratio(random_gradient_spectrum(rnn)));
    worst_fast = std::max(worst_fast, spectrum_ratio(random_gradient_spectrum(fast)));
  }
  RecordProperty("rnn_min_ratio", std::to_string(worst_rnn));
  RecordProperty("fastrnn_max_ratio", std::to_string(worst_fast));
  EXPECT_GT(worst_rnn, 1e6);
  EXPECT_LT(worst_fast, 1e2);
}

TEST(AlphaBeta, RecordJsonRoundTrip) {
  AlphaBetaRecord r;
  r.dataset = "delayed_recall";
  r.T = 100;
  r.seed = 4;
  r.alpha = 0.01;
  r.beta = 0.985;
  r.ratio = r.alpha / r.beta;
  r.rel_error = 0.005;
  r.val_accuracy = 0.9;
  const AlphaBetaRecord b = alpha_beta_record_from_json(to_json(r));
  EXPECT_EQ(b.dataset, r.dataset);
  EXPECT_EQ(b.T, 100);
  EXPECT_EQ(b.seed, 4u);
  EXPECT_EQ(b.alpha, r.alpha);
  EXPECT_EQ(b.ratio, r.ratio);
  EXPECT_FALSE(b.diverged);
}

TEST(AlphaBeta, SmallStudyProducesOneRecordPerHorizon) {
  AlphaBetaStudy s;
  s.horizons = {10, 20};
  s.samples = 60;
  s.hidden = 4;
  s.train.e1 = 2;
  s.train.batch_size = 16;
  const auto recs = alpha_beta_study(s);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].T, 10);
  EXPECT_EQ(recs[1].T, 20);
  for (const auto& r : recs) {
    EXPECT_FALSE(r.diverged);
    EXPECT_GT(r.alpha, 0.0);
    EXPECT_GT(r.beta, 0.0);
    EXPECT_NEAR(r.ratio, r.alpha / r.beta, 1e-15);
  }
}

}  // namespace
}  // namespace fastgrnn
