// SPDX-License-Identifier: Apache-2.0
//
// Symmetric per-tensor int8 export of models trained with piecewise-linear
// nonlinearities, and the bridge to the integer-only kernel.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fastgrnn/data.hpp"
#include "fastgrnn/integer_model.hpp"
#include "fastgrnn/model.hpp"

namespace fastgrnn {

/// The model cannot be exported as asked (e.g. smooth nonlinearities).
struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct QuantizedTensor {
  Index rows = 0;
  Index cols = 0;
  float scale = 1.0f;
  std::vector<std::int8_t> values;  // row-major

  Index nnz() const;
};

/// scale = max|m| / 127 (1 for an all-zero tensor), q = round(m / scale)
/// with halves away from zero, |q| <= 127.
QuantizedTensor quantize_tensor(const MatrixD& m);
MatrixD dequantize(const QuantizedTensor& q);

/// (multiplier, shift) with multiplier in [2^30, 2^31) so that
/// multiplier * 2^-shift approximates ratio; ratio must lie in [0, 2^30).
/// Ratios too small to represent give multiplier 0.
integer::Requant make_requant(double ratio);
double requant_ratio(const integer::Requant& rq);

/// Block identifiers. Factor tensors are stored in the orientation the
/// kernel applies them: W x = W1 (W2^T x).
enum class QTensorId : std::uint8_t {
  W = 0,
  W1 = 1,
  W2T = 2,
  U = 3,
  U1 = 4,
  U2T = 5,
  BCand = 6,  // b (FastRNN) or b_h (FastGRNN)
  BGate = 7,  // b_z
  WOut = 8,
};

const char* to_string(QTensorId id);

struct QuantizedBlock {
  QTensorId id = QTensorId::W;
  QuantizedTensor tensor;
};

struct QuantizedModel {
  Arch arch = Arch::FastGrnn;
  Index input_dim = 0;
  Index hidden_dim = 0;
  Index num_classes = 2;
  Index horizon = 0;
  Index rank_w = 0;  // 0 = dense
  Index rank_u = 0;
  Nonlin nonlin = Nonlin::HardTanh;  // FastRNN nonlinearity / FastGRNN candidate
  Nonlin gate_nonlin = Nonlin::HardSigmoid;
  Head head = Head::Softmax;
  std::optional<NormStats> norm;  // stored as float32

  /// Inputs enter the kernel as Q1.14 of x_norm / 2^input_shift; the factor
  /// is folded into the first W tensor.
  std::uint8_t input_shift = 2;
  std::uint8_t mid_frac_w = 0;  // fractional bits of the factored intermediates
  std::uint8_t mid_frac_u = 0;
  std::int32_t g0 = 0;  // Q1.14: zeta (FastGRNN) or alpha (FastRNN)
  std::int32_t g1 = 0;  // Q1.14: nu or beta
  std::vector<std::int32_t> b_out;

  std::vector<QuantizedBlock> blocks;

  const QuantizedTensor& tensor(QTensorId id) const;
  const QuantizedTensor* find(QTensorId id) const;
};

/// Exports a trained FastRNN / FastGRNN whose nonlinearities are all
/// hard_tanh / hard_sigmoid; anything else throws PreconditionError.
QuantizedModel quantize_model(const ModelD& model, const std::optional<NormStats>& norm, Index horizon);

/// The pure-integer view consumed by the kernel.
integer::IntegerModel to_integer_model(const QuantizedModel& qm);

/// Float model carrying the dequantized parameters, for comparing the
/// integer path against float arithmetic on identical weights. It expects
/// normalized inputs.
ModelD dequantized_model(const QuantizedModel& qm);

/// Normalizes one raw sequence (T*D values, time-major) with the stored
/// stats and converts it to the kernel's Q1.14 input format.
std::vector<std::int16_t> quantize_input(const QuantizedModel& qm, std::span<const double> raw);

/// Inverse of the kernel's activation format.
double q14_to_double(std::int32_t v);

}  // namespace fastgrnn
