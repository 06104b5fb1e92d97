// SPDX-License-Identifier: Apache-2.0
//
// Integer-only description of a quantized FastGRNN / FastRNN. Nothing in
// this header may involve floating-point types: it is compiled into the
// integer kernel, which is built without access to FP registers.
#pragma once

#include <cstdint>
#include <vector>

namespace fastgrnn::integer {

inline constexpr std::uint8_t kArchFastRnn = 1;
inline constexpr std::uint8_t kArchFastGrnn = 3;
inline constexpr std::uint8_t kNonlinHardTanh = 3;
inline constexpr std::uint8_t kNonlinHardSigmoid = 4;
inline constexpr std::uint8_t kHeadSoftmax = 0;
inline constexpr std::uint8_t kHeadLogistic = 1;

/// Q1.14 activations: 1.0 == 1 << kActFrac.
inline constexpr int kActFrac = 14;

/// Real value of an accumulator = acc * multiplier * 2^-shift, applied as
/// (acc * multiplier + 2^(shift-1)) >> shift in 64 bits (round half up).
struct Requant {
  std::int32_t multiplier = 0;
  std::uint8_t shift = 1;
};

/// Dense int8 matrix in operator orientation (out x in), row-major. Pruned
/// entries are stored as 0.
struct QMatrix {
  std::uint16_t rows = 0;
  std::uint16_t cols = 0;
  std::vector<std::int8_t> values;
};

/// y = A x (dense) or y = A2 (A1 x) (factored), producing Q1.14 int32 from
/// an int16 input carrying kActFrac fractional bits.
struct QLinear {
  bool factored = false;
  QMatrix first;         // dense: out x in; factored: rank x in
  Requant first_rq;      // factored only: first product -> int16 with mid_frac bits
  std::uint8_t mid_frac = 0;
  QMatrix second;        // factored only: out x rank
  Requant out_rq;        // final accumulator -> Q1.14
};

struct QBias {
  std::vector<std::int8_t> values;
  Requant rq;  // int8 value -> Q1.14
};

struct IntegerModel {
  std::uint8_t arch = kArchFastGrnn;
  std::uint8_t cand_nonlin = kNonlinHardTanh;  // FastRNN nonlinearity / FastGRNN candidate
  std::uint8_t gate_nonlin = kNonlinHardSigmoid;
  std::uint8_t head = kHeadSoftmax;
  std::uint16_t input_dim = 0;
  std::uint16_t hidden_dim = 0;
  std::uint16_t head_rows = 0;  // L for softmax, 1 for logistic

  QLinear W;
  QLinear U;
  QBias b_cand;  // b (FastRNN) or b_h
  QBias b_gate;  // b_z (FastGRNN only)

  // Q1.14 gate constants: zeta, nu (FastGRNN) or alpha, beta (FastRNN).
  std::int32_t g0 = 0;
  std::int32_t g1 = 0;

  QMatrix w_out;
  std::vector<std::int32_t> b_out;  // at the head accumulator scale
};

}  // namespace fastgrnn::integer
