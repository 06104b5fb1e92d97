// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fastgrnn/integer_model.hpp"

namespace fastgrnn::integer {

std::int32_t requantize(std::int64_t acc, const Requant& rq);
std::int16_t saturate_i16(std::int64_t v);

/// Runs a quantized model with integer arithmetic only. All working storage
/// is allocated by the constructor; run() does not allocate. One engine
/// serves one caller at a time; threads should each build their own engine
/// from the shared IntegerModel.
class IntegerEngine {
 public:
  /// Validates the model (shapes, supported tags, int32 headroom of every
  /// accumulation) and throws std::invalid_argument on failure.
  explicit IntegerEngine(IntegerModel model);

  const IntegerModel& model() const { return model_; }

  /// x holds T steps of input_dim Q1.14 values, time-major. Returns the
  /// predicted label. When hidden_trace is non-empty it must hold
  /// T * hidden_dim entries and receives h_1..h_T.
  int run(std::span<const std::int16_t> x, std::size_t steps, std::span<std::int16_t> hidden_trace = {});

  /// Logits of the last run().
  std::span<const std::int32_t> logits() const { return logits_; }

 private:
  void linear(const QLinear& op, std::span<const std::int16_t> in, std::span<std::int32_t> out);

  IntegerModel model_;
  std::vector<std::int32_t> bias_cand_q14_;
  std::vector<std::int32_t> bias_gate_q14_;
  std::vector<std::int16_t> h_;
  std::vector<std::int16_t> mid_;
  std::vector<std::int32_t> wx_;
  std::vector<std::int32_t> uh_;
  std::vector<std::int32_t> logits_;
};

}  // namespace fastgrnn::integer
