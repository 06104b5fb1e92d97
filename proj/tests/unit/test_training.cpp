// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "fastgrnn/training.hpp"
#include "test_support.hpp"

namespace fastgrnn {
namespace {

using testing::random_model;
using testing::RandomModelSpec;

ModelD tiny_fastrnn() {
  RandomModelSpec s;
  s.arch = Arch::FastRnn;
  s.D = 2;
  s.H = 3;
  s.L = 2;
  s.seed = 11;
  return random_model(s);
}

GradientsD random_grads(const ModelD& m, std::uint64_t seed) {
  GradientsD g = zeros_like(m);
  Rng rng(seed, 3);
  for_each_tensor(g, [&](const std::string&, auto t) {
    for (Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
  });
  return g;
}

std::vector<double> flatten(const ModelD& m) {
  std::vector<double> v;
  for_each_tensor(m, [&](const std::string&, auto t) {
    for (Index i = 0; i < t.size(); ++i) v.push_back(t.data()[i]);
  });
  return v;
}

double& alpha_raw(ModelD& m) { return std::get<FastRnnParams<double>>(m.cell).alpha_raw; }

TEST(Optimizer, SgdIsParamMinusRateTimesGradient) {
  ModelD m = tiny_fastrnn();
  const GradientsD g = random_grads(m, 1);
  const std::vector<double> p0 = flatten(m);
  const std::vector<double> gv = flatten(g);
  OptimizerState st;
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Sgd;
  optimizer_step(m, g, st, cfg, 0.25);
  const std::vector<double> p1 = flatten(m);
  ASSERT_EQ(p1.size(), p0.size());
  for (std::size_t i = 0; i < p0.size(); ++i) EXPECT_EQ(p1[i], p0[i] - 0.25 * gv[i]);
}

TEST(Optimizer, ZeroGradientLeavesParametersUnchanged) {
  for (OptimizerKind k : {OptimizerKind::Sgd, OptimizerKind::Momentum, OptimizerKind::Adam}) {
    ModelD m = tiny_fastrnn();
    const std::vector<double> p0 = flatten(m);
    OptimizerState st;
    OptimizerConfig cfg;
    cfg.kind = k;
    for (int i = 0; i < 3; ++i) optimizer_step(m, zeros_like(m), st, cfg, 0.1);
    EXPECT_EQ(flatten(m), p0) << to_string(k);
  }
}

TEST(Optimizer, AdamMatchesScalarRecurrenceOnQuadratic) {
  ModelD m = tiny_fastrnn();
  alpha_raw(m) = 1.0;
  OptimizerState st;
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Adam;
  const double lr = 0.05;
  double x = 1.0, mo = 0.0, so = 0.0;
  for (int step = 1; step <= 100; ++step) {
    GradientsD g = zeros_like(m);
    alpha_raw(g) = 2.0 * alpha_raw(m);
    optimizer_step(m, g, st, cfg, lr);

    const double gx = 2.0 * x;
    mo = 0.9 * mo + 0.1 * gx;
    so = 0.999 * so + 0.001 * gx * gx;
    const double mh = mo / (1.0 - std::pow(0.9, step));
    const double sh = so / (1.0 - std::pow(0.999, step));
    x -= lr * mh / (std::sqrt(sh) + 1e-8);
    ASSERT_NEAR(alpha_raw(m), x, 1e-12) << "step " << step;
  }
  EXPECT_LT(std::abs(alpha_raw(m)), 0.05);
  EXPECT_EQ(st.steps, 100);
}

TEST(Optimizer, MomentumAccumulatesVelocity) {
  ModelD m = tiny_fastrnn();
  alpha_raw(m) = 0.0;
  OptimizerState st;
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Momentum;
  cfg.momentum = 0.5;
  GradientsD g = zeros_like(m);
  alpha_raw(g) = 1.0;
  // v1 = 1, v2 = 1.5, v3 = 1.75
  optimizer_step(m, g, st, cfg, 0.1);
  EXPECT_NEAR(alpha_raw(m), -0.1, 1e-15);
  optimizer_step(m, g, st, cfg, 0.1);
  EXPECT_NEAR(alpha_raw(m), -0.25, 1e-15);
  optimizer_step(m, g, st, cfg, 0.1);
  EXPECT_NEAR(alpha_raw(m), -0.425, 1e-15);
}

TEST(Optimizer, NonFiniteGradientThrowsWithoutTouchingParameters) {
  for (double bad : {std::nan(""), std::numeric_limits<double>::infinity()}) {
    ModelD m = tiny_fastrnn();
    const std::vector<double> p0 = flatten(m);
    GradientsD g = random_grads(m, 2);
    g.classifier.bias(1) = bad;
    OptimizerState st;
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::Adam;
    EXPECT_THROW(optimizer_step(m, g, st, cfg, 0.1), NumericError);
    EXPECT_EQ(flatten(m), p0);
    EXPECT_EQ(st.steps, 0);
  }
}

TEST(Optimizer, ParseNames) {
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::Sgd);
  EXPECT_EQ(parse_optimizer("momentum"), OptimizerKind::Momentum);
  EXPECT_EQ(parse_optimizer("adam"), OptimizerKind::Adam);
  EXPECT_THROW(parse_optimizer("rmsprop"), std::invalid_argument);
}

TEST(Schedule, DefaultDecaysAtTwoThirds) {
  const LrSchedule s = default_schedule(300);
  ASSERT_EQ(s.at_epochs.size(), 1u);
  EXPECT_EQ(s.at_epochs[0], 200);
  EXPECT_DOUBLE_EQ(learning_rate(0.01, s, 199), 0.01);
  EXPECT_DOUBLE_EQ(learning_rate(0.01, s, 200), 0.001);
  EXPECT_DOUBLE_EQ(learning_rate(0.01, s, 299), 0.001);
}

TEST(Schedule, MultipleDecaysCompound) {
  LrSchedule s;
  s.factor = 0.5;
  s.at_epochs = {2, 4};
  EXPECT_DOUBLE_EQ(learning_rate(1.0, s, 1), 1.0);
  EXPECT_DOUBLE_EQ(learning_rate(1.0, s, 3), 0.5);
  EXPECT_DOUBLE_EQ(learning_rate(1.0, s, 4), 0.25);
}

TEST(TrainConfig, ValidateRejectsBadValues) {
  auto bad = [](auto edit) {
    TrainConfig c;
    edit(c);
    EXPECT_THROW(validate(c), std::invalid_argument);
  };
  bad([](TrainConfig& c) { c.lr = 0.0; });
  bad([](TrainConfig& c) { c.lr = std::nan(""); });
  bad([](TrainConfig& c) { c.batch_size = 0; });
  bad([](TrainConfig& c) { c.e1 = -1; });
  bad([](TrainConfig& c) { c.projection_period = 0; });
  bad([](TrainConfig& c) { c.early_stop.patience = 0; });
  bad([](TrainConfig& c) { c.optimizer.momentum = 1.0; });
  EXPECT_NO_THROW(validate(TrainConfig{}));
}

SequenceDataset recall_data(Index T, Index N, std::uint64_t seed) {
  SynthOptions o;
  o.D = 2;
  o.noise_std = 0.5;
  return synth_task(SynthKind::DelayedRecall, T, N, seed, o);
}

ModelD fastrnn_for(const SequenceDataset& ds, Index H, std::uint64_t seed, const SparsityPlan& plan = {}) {
  ModelShape shape;
  shape.arch = Arch::FastRnn;
  shape.input_dim = ds.D;
  shape.hidden_dim = H;
  shape.num_classes = ds.L;
  shape.horizon = ds.T;
  return init_for_plan(shape, plan, seed);
}

TEST(Stage, ZeroEpochsLeavesModelUnchanged) {
  const SequenceDataset ds = recall_data(8, 40, 1);
  const ModelD m = fastrnn_for(ds, 4, 0);
  TrainConfig cfg;
  const StageResult r = train_stage(m, ds, ds, Stage::I, nullptr, nullptr, cfg, 0, 0);
  EXPECT_EQ(r.epochs_run, 0);
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(flatten(r.model), flatten(m));
}

TEST(Stage, StageThreeKeepsOffMaskEntriesExactlyZero) {
  const SequenceDataset ds = recall_data(8, 60, 2);
  const ModelD m = fastrnn_for(ds, 6, 1);
  SupportMasks masks;
  Rng rng(5);
  for_each_tensor(m, [&](const std::string& name, auto t) {
    if (!is_compressible_tensor(name)) return;
    MaskArray mk(t.rows(), t.cols());
    for (Index i = 0; i < mk.size(); ++i) mk.data()[i] = rng.uniform() < 0.4;
    masks.emplace(name, mk);
  });
  TrainConfig cfg;
  cfg.batch_size = 12;
  cfg.lr = 0.05;
  cfg.early_stop.enabled = false;
  int checked = 0;
  auto check = [&](const HistoryRecord&, const ModelD& mm, const SupportMasks&) {
    for_each_tensor(mm, [&](const std::string& name, auto t) {
      const auto it = masks.find(name);
      if (it == masks.end()) return;
      for (Index i = 0; i < t.size(); ++i)
        if (!it->second.data()[i]) {
          ASSERT_EQ(t.data()[i], 0.0) << name << "[" << i << "]";
        }
    });
    ++checked;
  };
  // 10 epochs of 5 steps each.
  const StageResult r = train_stage(m, ds, ds, Stage::III, nullptr, &masks, cfg, 10, 0, check);
  EXPECT_EQ(checked, 10);
  EXPECT_EQ(r.masks.size(), masks.size());
}

TEST(Stage, StageTwoEndsAtExactBudgets) {
  const SequenceDataset ds = recall_data(8, 60, 3);
  SparsityPlan plan;
  plan.rank_w = 2;
  plan.rank_u = 3;
  plan.s_w = 0.3;
  plan.s_u = 0.45;
  const ModelD m = fastrnn_for(ds, 6, 2, plan);
  TrainConfig cfg;
  cfg.batch_size = 20;
  cfg.projection_period = 2;
  cfg.early_stop.enabled = false;
  const StageResult r = train_stage(m, ds, ds, Stage::II, &plan, nullptr, cfg, 4, 0, {});
  const auto nnz = nonzeros_per_tensor(r.model);
  // W1 6x2, W2 2x2 (input), U1 6x3, U2 6x3.
  EXPECT_LE(nnz.at("W1"), sparsity_budget(0.3, 12));
  EXPECT_LE(nnz.at("W2"), sparsity_budget(0.3, 4));
  EXPECT_LE(nnz.at("U1"), sparsity_budget(0.45, 18));
  EXPECT_LE(nnz.at("U2"), sparsity_budget(0.45, 18));
  for (const auto& [name, mask] : r.masks) {
    const double s = name[0] == 'W' ? plan.s_w : plan.s_u;
    EXPECT_EQ(count_nonzeros(mask), sparsity_budget(s, mask.size())) << name;
  }
  for (const auto& rec : r.history) {
    EXPECT_EQ(rec.stage, 2);
    EXPECT_LE(rec.nnz.at("W1"), sparsity_budget(0.3, 12));
  }
}

TEST(Stage, RejectsMissingPlanOrMasks) {
  const SequenceDataset ds = recall_data(4, 10, 4);
  const ModelD m = fastrnn_for(ds, 3, 0);
  TrainConfig cfg;
  EXPECT_THROW(train_stage(m, ds, ds, Stage::II, nullptr, nullptr, cfg, 1, 0), std::invalid_argument);
  EXPECT_THROW(train_stage(m, ds, ds, Stage::III, nullptr, nullptr, cfg, 1, 0), std::invalid_argument);
}

TEST(Stage, EarlyStoppingHonoursPatience) {
  const SequenceDataset ds = recall_data(4, 20, 5);
  const ModelD m = fastrnn_for(ds, 3, 0);
  TrainConfig cfg;
  cfg.lr = 1e-12;  // the validation metric cannot improve
  cfg.early_stop.patience = 3;
  SupportMasks none;
  const StageResult r = train_stage(m, ds, ds, Stage::III, nullptr, &none, cfg, 50, 0);
  EXPECT_EQ(r.epochs_run, 4);
}

TEST(TrainFull, FastRnnFitsShortDelayedRecall) {
  const SequenceDataset all = recall_data(10, 250, 6);
  auto [train, val] = split_train_val(all, 0.8, 1);
  const ModelD m = fastrnn_for(train, 8, 3);
  TrainConfig cfg;
  cfg.e1 = 50;
  cfg.e2 = 0;
  cfg.e3 = 0;
  cfg.batch_size = 20;
  cfg.lr = 0.02;
  cfg.optimizer.kind = OptimizerKind::Adam;
  const TrainedModel t = train_full(m, train, val, SparsityPlan{}, cfg);
  const EvalMetrics e = evaluate(t.model, train);
  EXPECT_GT(e.accuracy, 0.95);
  for (const auto& r : t.history) EXPECT_TRUE(std::isfinite(r.loss));
}

TEST(TrainFull, BestCheckpointMatchesRecordedMetric) {
  const SequenceDataset all = recall_data(6, 120, 7);
  auto [train, val] = split_train_val(all, 0.8, 2);
  SparsityPlan plan;
  plan.s_w = 0.5;
  plan.s_u = 0.5;
  const ModelD m = fastrnn_for(train, 6, 4, plan);
  TrainConfig cfg;
  cfg.e1 = 3;
  cfg.e2 = 3;
  cfg.e3 = 3;
  cfg.batch_size = 16;
  cfg.projection_period = 2;
  const TrainedModel t = train_full(m, train, val, plan, cfg);
  EXPECT_EQ(t.history.size(), 9u);
  EXPECT_GE(t.best_stage, 2);
  EXPECT_DOUBLE_EQ(evaluate(t.model, val).accuracy, t.best_val_metric);
  double best = -1.0;
  for (const auto& r : t.history)
    if (r.stage >= 2) best = std::max(best, r.val_metric);
  EXPECT_DOUBLE_EQ(best, t.best_val_metric);
  for (const auto& [name, mask] : t.masks) {
    const double s = name[0] == 'W' ? plan.s_w : plan.s_u;
    EXPECT_EQ(count_nonzeros(mask), sparsity_budget(s, mask.size()));
  }
}

TEST(TrainFull, ReplayIsBitIdentical) {
  const SequenceDataset all = recall_data(6, 80, 8);
  auto [train, val] = split_train_val(all, 0.8, 3);
  SparsityPlan plan;
  plan.s_w = 0.5;
  TrainConfig cfg;
  cfg.e1 = 2;
  cfg.e2 = 2;
  cfg.e3 = 2;
  cfg.batch_size = 10;
  cfg.seed = 9;
  auto once = [&] { return train_full(fastrnn_for(train, 5, 9, plan), train, val, plan, cfg); };
  const TrainedModel a = once();
  const TrainedModel b = once();
  EXPECT_EQ(flatten(a.model), flatten(b.model));
  EXPECT_EQ(flatten(a.final_model), flatten(b.final_model));
  std::ostringstream ha, hb;
  write_history(ha, a.history);
  write_history(hb, b.history);
  EXPECT_EQ(ha.str(), hb.str());
}

TEST(History, JsonLineRoundTrip) {
  HistoryRecord r;
  r.epoch = 17;
  r.stage = 2;
  r.loss = 0.123456789012345;
  r.val_metric = 0.875;
  r.lr = 1e-3;
  r.alpha = 0.01;
  r.beta = 0.99;
  r.nnz = {{"W", 12}, {"U", 30}};
  const HistoryRecord back = history_from_json_line(to_json_line(r));
  EXPECT_EQ(back.epoch, 17);
  EXPECT_EQ(back.stage, 2);
  EXPECT_EQ(back.loss, r.loss);
  EXPECT_EQ(back.val_metric, r.val_metric);
  EXPECT_EQ(back.lr, r.lr);
  EXPECT_EQ(back.alpha, r.alpha);
  EXPECT_EQ(back.beta, r.beta);
  EXPECT_FALSE(back.zeta.has_value());
  EXPECT_FALSE(back.nu.has_value());
  EXPECT_EQ(back.nnz, r.nnz);
}

TEST(History, RecordGatesPerArchitecture) {
  RandomModelSpec s;
  s.arch = Arch::FastRnn;
  HistoryRecord r;
  record_gates(random_model(s), r);
  EXPECT_TRUE(r.alpha && r.beta);
  EXPECT_FALSE(r.zeta);
  s.arch = Arch::FastGrnn;
  HistoryRecord g;
  record_gates(random_model(s), g);
  EXPECT_TRUE(g.zeta && g.nu);
  EXPECT_FALSE(g.alpha);
  s.arch = Arch::Rnn;
  HistoryRecord n;
  record_gates(random_model(s), n);
  EXPECT_FALSE(n.alpha || n.zeta);
}

TEST(Evaluate, RejectsFeatureMismatch) {
  const SequenceDataset ds = recall_data(4, 10, 9);
  RandomModelSpec s;
  s.D = 3;
  s.L = 2;
  EXPECT_THROW(evaluate(random_model(s), ds), DimensionError);
}

}  // namespace
}  // namespace fastgrnn
