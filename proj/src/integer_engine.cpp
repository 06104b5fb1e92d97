// SPDX-License-Identifier: Apache-2.0
//
// Compiled with -mgeneral-regs-only: a floating-point operation anywhere in
// this file fails the build.
#include "fastgrnn/integer_engine.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

#include "fastgrnn/piecewise.hpp"

namespace fastgrnn::integer {

namespace {

constexpr std::int64_t kAccLimit = std::int64_t{1} << 31;
constexpr std::int32_t kPreLimit = std::int32_t{1} << 30;
constexpr std::int32_t kHalf = std::int32_t{1} << (kActFrac - 1);

void fail(const std::string& what) { throw std::invalid_argument("integer model: " + what); }

void check_matrix(const QMatrix& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows != rows || m.cols != cols || m.values.size() != rows * cols) {
    fail(std::string(name) + " has shape " + std::to_string(m.rows) + "x" + std::to_string(m.cols) + ", expected " +
         std::to_string(rows) + "x" + std::to_string(cols));
  }
  // Worst case |sum| = cols * 127 * 32768 must stay inside int32.
  if (static_cast<std::int64_t>(cols) * 127 * 32768 >= kAccLimit) {
    fail(std::string(name) + " has too many columns for a 32-bit accumulator");
  }
}

void check_requant(const Requant& rq, const char* name) {
  if (rq.multiplier < 0 || rq.shift < 1 || rq.shift > 62) fail(std::string("bad rescale for ") + name);
}

void check_linear(const QLinear& op, std::size_t out, std::size_t in, const char* name) {
  if (op.factored) {
    const std::size_t rank = op.first.rows;
    if (rank == 0) fail(std::string(name) + " has rank 0");
    check_matrix(op.first, rank, in, name);
    check_matrix(op.second, out, rank, name);
    check_requant(op.first_rq, name);
  } else {
    check_matrix(op.first, out, in, name);
  }
  check_requant(op.out_rq, name);
}

bool supported_nonlin(std::uint8_t n) { return n == kNonlinHardTanh || n == kNonlinHardSigmoid; }

std::int32_t nonlin_q14(std::uint8_t kind, std::int32_t x) {
  return kind == kNonlinHardSigmoid ? hard_sigmoid_q14(x) : hard_tanh_q14(x);
}

std::int32_t clamp_pre(std::int64_t v) {
  return static_cast<std::int32_t>(std::clamp<std::int64_t>(v, -kPreLimit, kPreLimit));
}

}  // namespace

std::int32_t requantize(std::int64_t acc, const Requant& rq) {
  const std::int64_t round = std::int64_t{1} << (rq.shift - 1);
  const std::int64_t v = (acc * rq.multiplier + round) >> rq.shift;
  return static_cast<std::int32_t>(std::clamp<std::int64_t>(v, std::numeric_limits<std::int32_t>::min(),
                                                            std::numeric_limits<std::int32_t>::max()));
}

std::int16_t saturate_i16(std::int64_t v) {
  return static_cast<std::int16_t>(std::clamp<std::int64_t>(v, -32768, 32767));
}

IntegerEngine::IntegerEngine(IntegerModel model) : model_(std::move(model)) {
  const IntegerModel& m = model_;
  if (m.arch != kArchFastGrnn && m.arch != kArchFastRnn) fail("only FastRNN and FastGRNN are supported");
  if (!supported_nonlin(m.cand_nonlin) || (m.arch == kArchFastGrnn && !supported_nonlin(m.gate_nonlin))) {
    fail("nonlinearities must be hard_tanh or hard_sigmoid");
  }
  if (m.input_dim == 0 || m.hidden_dim == 0 || m.head_rows == 0) fail("zero dimension");
  if (m.head != kHeadSoftmax && m.head != kHeadLogistic) fail("unknown head");
  if (m.head == kHeadLogistic && m.head_rows != 1) fail("logistic head must have one row");
  const std::size_t D = m.input_dim;
  const std::size_t H = m.hidden_dim;
  check_linear(m.W, H, D, "W");
  check_linear(m.U, H, H, "U");
  check_matrix(m.w_out, m.head_rows, H, "W_out");
  if (m.b_cand.values.size() != H) fail("candidate bias length");
  check_requant(m.b_cand.rq, "b");
  if (m.arch == kArchFastGrnn) {
    if (m.b_gate.values.size() != H) fail("gate bias length");
    check_requant(m.b_gate.rq, "b_z");
  }
  if (m.b_out.size() != m.head_rows) fail("head bias length");
  for (std::int32_t b : m.b_out) {
    if (static_cast<std::int64_t>(H) * 127 * 32768 + (b < 0 ? -static_cast<std::int64_t>(b) : b) >= kAccLimit) {
      fail("head accumulator exceeds 32 bits");
    }
  }
  if (m.g0 < 0 || m.g0 > kQ14One || m.g1 < 0 || m.g1 > kQ14One) fail("gate constants must lie in [0, 1]");

  bias_cand_q14_.resize(H);
  bias_gate_q14_.assign(H, 0);
  for (std::size_t i = 0; i < H; ++i) {
    bias_cand_q14_[i] = requantize(m.b_cand.values[i], m.b_cand.rq);
    if (m.arch == kArchFastGrnn) bias_gate_q14_[i] = requantize(m.b_gate.values[i], m.b_gate.rq);
  }
  h_.assign(H, 0);
  mid_.assign(std::max<std::size_t>(m.W.factored ? m.W.first.rows : 0, m.U.factored ? m.U.first.rows : 0), 0);
  wx_.assign(H, 0);
  uh_.assign(H, 0);
  logits_.assign(m.head_rows, 0);
}

void IntegerEngine::linear(const QLinear& op, std::span<const std::int16_t> in, std::span<std::int32_t> out) {
  auto product = [](const QMatrix& a, std::size_t r, auto&& src) {
    std::int32_t acc = 0;
    const std::int8_t* row = a.values.data() + r * a.cols;
    for (std::size_t c = 0; c < a.cols; ++c) acc += static_cast<std::int32_t>(row[c]) * src[c];
    return acc;
  };
  if (!op.factored) {
    for (std::size_t r = 0; r < op.first.rows; ++r) out[r] = requantize(product(op.first, r, in), op.out_rq);
    return;
  }
  for (std::size_t k = 0; k < op.first.rows; ++k) mid_[k] = saturate_i16(requantize(product(op.first, k, in), op.first_rq));
  for (std::size_t r = 0; r < op.second.rows; ++r) out[r] = requantize(product(op.second, r, mid_), op.out_rq);
}

int IntegerEngine::run(std::span<const std::int16_t> x, std::size_t steps, std::span<std::int16_t> hidden_trace) {
  const IntegerModel& m = model_;
  const std::size_t D = m.input_dim;
  const std::size_t H = m.hidden_dim;
  if (steps == 0 || x.size() != steps * D) {
    throw std::invalid_argument("integer run: input has " + std::to_string(x.size()) + " values, expected " +
                                std::to_string(steps) + " x " + std::to_string(D));
  }
  if (!hidden_trace.empty() && hidden_trace.size() != steps * H) {
    throw std::invalid_argument("integer run: hidden trace buffer has the wrong length");
  }
  std::fill(h_.begin(), h_.end(), std::int16_t{0});
  for (std::size_t t = 0; t < steps; ++t) {
    linear(m.W, x.subspan(t * D, D), wx_);
    linear(m.U, h_, uh_);
    for (std::size_t i = 0; i < H; ++i) {
      const std::int64_t pre = static_cast<std::int64_t>(wx_[i]) + uh_[i];
      const std::int32_t cand = nonlin_q14(m.cand_nonlin, clamp_pre(pre + bias_cand_q14_[i]));
      const std::int32_t hp = h_[i];
      std::int32_t next;
      if (m.arch == kArchFastGrnn) {
        const std::int32_t z = nonlin_q14(m.gate_nonlin, clamp_pre(pre + bias_gate_q14_[i]));
        const std::int32_t c = ((m.g0 * (kQ14One - z) + kHalf) >> kActFrac) + m.g1;
        next = (c * cand + z * hp + kHalf) >> kActFrac;
      } else {
        next = (m.g0 * cand + m.g1 * hp + kHalf) >> kActFrac;
      }
      h_[i] = saturate_i16(next);
    }
    if (!hidden_trace.empty()) std::copy(h_.begin(), h_.end(), hidden_trace.begin() + static_cast<std::ptrdiff_t>(t * H));
  }
  int best = 0;
  for (std::size_t r = 0; r < m.head_rows; ++r) {
    std::int32_t acc = m.b_out[r];
    const std::int8_t* row = m.w_out.values.data() + r * H;
    for (std::size_t c = 0; c < H; ++c) acc += static_cast<std::int32_t>(row[c]) * h_[c];
    logits_[r] = acc;
    if (acc > logits_[static_cast<std::size_t>(best)]) best = static_cast<int>(r);
  }
  if (m.head == kHeadLogistic) return logits_[0] > 0 ? 1 : 0;
  return best;
}

}  // namespace fastgrnn::integer
