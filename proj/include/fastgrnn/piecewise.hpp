// SPDX-License-Identifier: Apache-2.0
//
// Piecewise-linear replacements for tanh and sigmoid. Models trained with
// these can be evaluated with integer arithmetic only; the integer variants
// operate on Q1.14 values (1.0 == 16384).
#pragma once

#include <cstdint>

namespace fastgrnn {

inline constexpr std::int32_t kQ14One = 1 << 14;

template <class S>
constexpr S hard_tanh(S x) {
  return x > S(1) ? S(1) : (x < S(-1) ? S(-1) : x);
}

template <class S>
constexpr S hard_sigmoid(S x) {
  const S y = (x + S(1)) / S(2);
  return y > S(1) ? S(1) : (y < S(0) ? S(0) : y);
}

template <class S>
constexpr S hard_tanh_derivative(S x) {
  return (x > S(-1) && x < S(1)) ? S(1) : S(0);
}

template <class S>
constexpr S hard_sigmoid_derivative(S x) {
  return (x > S(-1) && x < S(1)) ? S(0.5) : S(0);
}

/// Q1.14 in, Q1.14 out; saturates at +-16384.
constexpr std::int32_t hard_tanh_q14(std::int32_t x) {
  return x > kQ14One ? kQ14One : (x < -kQ14One ? -kQ14One : x);
}

/// Q1.14 in, Q1.14 out: clamp((x + 1) / 2, 0, 1) with the halving rounded down.
constexpr std::int32_t hard_sigmoid_q14(std::int32_t x) {
  const std::int32_t y = (x + kQ14One) >> 1;
  return y > kQ14One ? kQ14One : (y < 0 ? 0 : y);
}

}  // namespace fastgrnn
