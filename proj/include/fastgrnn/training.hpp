// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fastgrnn/compression.hpp"
#include "fastgrnn/data.hpp"

namespace fastgrnn {

enum class OptimizerKind : std::uint8_t { Sgd = 0, Momentum = 1, Adam = 2 };

OptimizerKind parse_optimizer(const std::string& name);
const char* to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Momentum;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-tensor accumulators, flattened in for_each_tensor order.
struct OptimizerState {
  std::vector<MatrixD> first;   // momentum buffer or Adam first moment
  std::vector<MatrixD> second;  // Adam second moment
  std::int64_t steps = 0;

  void reset() {
    first.clear();
    second.clear();
    steps = 0;
  }
};

/// One SGD / Polyak momentum / Adam update of every tensor. A non-finite
/// gradient throws before any parameter is touched.
void optimizer_step(ModelD& model, const GradientsD& grads, OptimizerState& state, const OptimizerConfig& cfg,
                    double lr);

/// Multiplies the rate by factor at each listed global epoch (0-based).
struct LrSchedule {
  double factor = 0.1;
  std::vector<int> at_epochs;
};

/// The default decays once by 0.1 at two thirds of the total epoch budget.
LrSchedule default_schedule(int total_epochs);
double learning_rate(double base, const LrSchedule& sched, int global_epoch);

struct EarlyStopConfig {
  bool enabled = true;
  int patience = 25;
  /// Validate on F1 of class 1 instead of accuracy (binary tasks).
  bool use_f1 = false;
};

struct TrainConfig {
  int e1 = 100;
  int e2 = 100;
  int e3 = 100;
  Index batch_size = 100;
  OptimizerConfig optimizer;
  double lr = 1e-2;
  std::optional<LrSchedule> schedule;  // default_schedule(e1 + e2 + e3) when unset
  Index projection_period = 20;
  EarlyStopConfig early_stop;
  std::uint64_t seed = 0;
  /// Global gradient-norm clip; only applied to the standard RNN.
  double clip_norm = 0.0;
  /// Stage II alternative: keep the last projection's support between projections.
  bool mask_between_projections = false;
};

void validate(const TrainConfig& cfg);

enum class Stage : std::uint8_t { I = 1, II = 2, III = 3 };

struct HistoryRecord {
  int epoch = 0;  // global, 0-based
  int stage = 1;
  double loss = 0.0;
  double val_metric = 0.0;
  double lr = 0.0;
  std::optional<double> alpha, beta, zeta, nu;  // absent when the cell lacks them
  std::map<std::string, Index> nnz;
};

std::string to_json_line(const HistoryRecord& r);
HistoryRecord history_from_json_line(const std::string& line);
void write_history(std::ostream& out, const std::vector<HistoryRecord>& h);

struct EvalMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  double loss = 0.0;
  std::vector<int> predictions;
};

EvalMetrics evaluate(const ModelD& model, const SequenceDataset& ds, Index chunk = 512);

struct StageResult {
  ModelD model;
  SupportMasks masks;
  std::vector<HistoryRecord> history;
  int epochs_run = 0;
};

/// Called after every epoch with its record and the model that was
/// validated (the projected copy in stage II) plus its masks.
using EpochCallback = std::function<void(const HistoryRecord&, const ModelD&, const SupportMasks&)>;

/// Runs one stage for `epochs` epochs (fewer if early stopping fires in
/// stages II and III). Stage II requires a plan; stage III requires masks.
/// epoch_offset is the global index of the first epoch, for the schedule.
StageResult train_stage(ModelD model, const SequenceDataset& train, const SequenceDataset& val, Stage stage,
                        const SparsityPlan* plan, const SupportMasks* masks, const TrainConfig& cfg, int epochs,
                        int epoch_offset, const EpochCallback& on_epoch = {});

struct TrainedModel {
  ModelD model;  // best validation checkpoint
  SupportMasks masks;
  ModelD final_model;
  std::vector<HistoryRecord> history;
  double best_val_metric = 0.0;
  int best_epoch = -1;
  int best_stage = 0;
};

/// Stages I, II and III in sequence, returning the best eligible validation
/// checkpoint: any epoch of stages II and III, or of stage I when the plan
/// is dense.
TrainedModel train_full(ModelD model, const SequenceDataset& train, const SequenceDataset& val,
                        const SparsityPlan& plan, const TrainConfig& cfg);

/// The model for a shape and plan, initialised from cfg.seed.
ModelD init_for_plan(ModelShape shape, const SparsityPlan& plan, std::uint64_t seed);

/// Gate scalars for the history record (scalar alpha/beta for FastRNN, the
/// mean of the vector for vector FastRNN).
void record_gates(const ModelD& m, HistoryRecord& r);

}  // namespace fastgrnn
