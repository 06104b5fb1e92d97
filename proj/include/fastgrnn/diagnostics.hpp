// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fastgrnn/training.hpp"

namespace fastgrnn {

/// prod_{k=t}^{T-1} (alpha U^T D_{k+1} + beta I), multiplied left to right,
/// where d_list[k-1] holds the diagonal of D_k (k = 1..T) and T is its size.
/// t ranges over [1, T]; t == T is the empty product, I.
MatrixD build_M(const MatrixD& U, const std::vector<VectorD>& d_list, double alpha, double beta, Index t);

/// max_{k=t..T-1} ||U^T D_{k+1}||_2 (0 for an empty range).
double max_transfer_norm(const MatrixD& U, const std::vector<VectorD>& d_list, Index t);

/// ((1 + q) / (1 - q))^(T - t) with q = (alpha / beta) max_k ||U^T D_{k+1}||_2.
/// alpha == 0 gives 1; q >= 1 (or beta == 0 with alpha > 0) gives +inf.
double condition_bound(const MatrixD& U, const std::vector<VectorD>& d_list, double alpha, double beta, Index t);

/// sigma_max / sigma_min by full SVD; +inf when sigma_min < 1e-300.
double empirical_condition(const MatrixD& M);

/// D_k diagonals of sequence `column` of a FastRNN / RNN trace.
std::vector<VectorD> derivative_diagonals(const ForwardTrace<double>& trace, Index column = 0);

struct ConditioningReport {
  Index T = 0;
  Index t = 1;
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<double> transfer_norms;  // ||U^T D_{k+1}||_2 for k = t..T-1
  double bound = 1.0;
  double kappa = 1.0;
  bool vacuous = false;  // bound is +inf
  std::vector<double> gradient_norms;  // ||dL/dh_t||, t = 1..T
};

std::string to_json(const ConditioningReport& r);
ConditioningReport conditioning_report_from_json(const std::string& s);

/// A random FastRNN instance with hard_sigmoid nonlinearity: U is Gaussian
/// rescaled to spectral norm u_norm, inputs are standard normal, and the D_k
/// come from the forward pass. alpha defaults to 1 / (T max_k ||U^T D_{k+1}||)
/// and beta to 1 - alpha.
struct ConditionInstance {
  Index hidden = 16;
  Index input_dim = 4;
  Index T = 20;
  Index t = 1;
  double u_norm = 1.0;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::uint64_t seed = 0;
};

ConditioningReport condition_study(const ConditionInstance& spec);

/// ||dL/dh_t|| for t = 1..T of the trace's batch (mean loss).
std::vector<double> gradient_norm_spectrum(const ModelD& model, const ForwardTrace<double>& trace,
                                           std::span<const int> labels);

/// Gradient spectrum of a randomly initialised model on random data, with U
/// rescaled to spectral norm u_norm when given.
struct SpectrumSpec {
  Arch arch = Arch::Rnn;
  Index hidden = 32;
  Index input_dim = 4;
  Index T = 100;
  std::optional<double> u_norm;
  Nonlin nonlin = Nonlin::Tanh;
  std::uint64_t seed = 0;
};

std::vector<double> random_gradient_spectrum(const SpectrumSpec& spec);

/// max_t / min_t of a spectrum (+inf when the minimum is 0).
double spectrum_ratio(const std::vector<double>& norms);

struct AlphaBetaRecord {
  std::string dataset;
  Index T = 0;
  std::uint64_t seed = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double ratio = 0.0;      // alpha / beta
  double rel_error = 0.0;  // |beta - (1 - alpha)| / beta
  double val_accuracy = 0.0;
  bool diverged = false;
};

std::string to_json(const AlphaBetaRecord& r);
AlphaBetaRecord alpha_beta_record_from_json(const std::string& s);

struct AlphaBetaStudy {
  SynthKind task = SynthKind::DelayedRecall;
  std::vector<Index> horizons = {50, 100, 200};
  Index samples = 600;  // train + validation, split 80/20
  Index hidden = 16;
  SynthOptions synth;
  TrainConfig train;  // only e1 is used; stages II and III are skipped
};

/// Trains one FastRNN per horizon (alpha initialised to 1/T) and records the
/// learnt alpha and beta. Divergence is recorded rather than thrown.
std::vector<AlphaBetaRecord> alpha_beta_study(const AlphaBetaStudy& study);

}  // namespace fastgrnn
