// SPDX-License-Identifier: Apache-2.0
#include "fastgrnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>
#include <stdexcept>

namespace fastgrnn {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "momentum") return OptimizerKind::Momentum;
  if (name == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::Momentum: return "momentum";
    case OptimizerKind::Adam: return "adam";
  }
  return "?";
}

void optimizer_step(ModelD& model, const GradientsD& grads, OptimizerState& state, const OptimizerConfig& cfg,
                    double lr) {
  for_each_tensor(grads, [](const std::string& name, auto g) {
    if (!g.allFinite()) throw NumericError("optimizer_step: non-finite gradient for '" + name + "'");
  });
  if (state.first.empty()) {
    for_each_tensor(model, [&](const std::string&, auto t) {
      state.first.push_back(MatrixD::Zero(t.rows(), t.cols()));
      if (cfg.kind == OptimizerKind::Adam) state.second.push_back(MatrixD::Zero(t.rows(), t.cols()));
    });
  }
  ++state.steps;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.steps));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.steps));
  std::size_t i = 0;
  for_each_tensor_pair(model, grads, [&](const std::string& name, auto p, auto g) {
    if (i >= state.first.size() || state.first[i].rows() != p.rows() || state.first[i].cols() != p.cols()) {
      throw DimensionError("optimizer_step: state does not match tensor '" + name + "'");
    }
    switch (cfg.kind) {
      case OptimizerKind::Sgd:
        p -= lr * g;
        break;
      case OptimizerKind::Momentum: {
        MatrixD& v = state.first[i];
        v = cfg.momentum * v + g;
        p -= lr * v;
        break;
      }
      case OptimizerKind::Adam: {
        MatrixD& m = state.first[i];
        MatrixD& s = state.second[i];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        s = cfg.beta2 * s + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        p.array() -= lr * (m.array() / bc1) / ((s.array() / bc2).sqrt() + cfg.eps);
        break;
      }
    }
    ++i;
  });
}

LrSchedule default_schedule(int total_epochs) {
  LrSchedule s;
  s.factor = 0.1;
  const int at = static_cast<int>(std::lround(2.0 * total_epochs / 3.0));
  if (total_epochs > 1 && at > 0) s.at_epochs.push_back(at);
  return s;
}

double learning_rate(double base, const LrSchedule& sched, int global_epoch) {
  double lr = base;
  for (int e : sched.at_epochs)
    if (global_epoch >= e) lr *= sched.factor;
  return lr;
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (cfg.e1 < 0 || cfg.e2 < 0 || cfg.e3 < 0) throw std::invalid_argument("stage epochs must be >= 0");
  if (cfg.projection_period < 1) throw std::invalid_argument("projection period must be >= 1");
  if (cfg.early_stop.patience < 1) throw std::invalid_argument("early-stop patience must be >= 1");
  if (cfg.optimizer.kind == OptimizerKind::Momentum && !(cfg.optimizer.momentum >= 0.0 && cfg.optimizer.momentum < 1.0))
    throw std::invalid_argument("momentum must lie in [0, 1)");
}

// -- history ----------------------------------------------------------------

std::string to_json_line(const HistoryRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["stage"] = r.stage;
  j["loss"] = r.loss;
  j["val_metric"] = r.val_metric;
  j["lr"] = r.lr;
  auto opt = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
    else j[key] = nullptr;
  };
  opt("alpha", r.alpha);
  opt("beta", r.beta);
  opt("zeta", r.zeta);
  opt("nu", r.nu);
  nlohmann::ordered_json nnz = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.nnz) nnz[k] = v;
  j["nnz"] = nnz;
  return j.dump();
}

HistoryRecord history_from_json_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  HistoryRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.stage = j.at("stage").get<int>();
  r.loss = j.at("loss").get<double>();
  r.val_metric = j.at("val_metric").get<double>();
  r.lr = j.at("lr").get<double>();
  auto opt = [&](const char* key) -> std::optional<double> {
    if (j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  r.alpha = opt("alpha");
  r.beta = opt("beta");
  r.zeta = opt("zeta");
  r.nu = opt("nu");
  for (const auto& [k, v] : j.at("nnz").items()) r.nnz[k] = v.get<Index>();
  return r;
}

void write_history(std::ostream& out, const std::vector<HistoryRecord>& h) {
  for (const auto& r : h) out << to_json_line(r) << '\n';
}

void record_gates(const ModelD& m, HistoryRecord& r) {
  std::visit(Overloaded{
                 [&](const RnnParams<double>&) {},
                 [&](const FastRnnParams<double>& p) {
                   r.alpha = p.alpha();
                   r.beta = p.beta();
                 },
                 [&](const VectorFastRnnParams<double>& p) {
                   r.alpha = p.alpha().mean();
                   r.beta = p.beta().mean();
                   r.zeta = p.zeta();
                   r.nu = p.nu();
                 },
                 [&](const FastGrnnParams<double>& p) {
                   r.zeta = p.zeta();
                   r.nu = p.nu();
                 },
             },
             m.cell);
}

// -- evaluation -------------------------------------------------------------

EvalMetrics evaluate(const ModelD& model, const SequenceDataset& ds, Index chunk) {
  if (ds.D != model.input_dim()) {
    throw DimensionError("evaluate: model expects " + std::to_string(model.input_dim()) + " features, dataset has " +
                         std::to_string(ds.D));
  }
  if (ds.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  EvalMetrics out;
  out.predictions.reserve(static_cast<std::size_t>(ds.size()));
  double loss_sum = 0.0;
  std::vector<Index> rows;
  for (Index start = 0; start < ds.size(); start += chunk) {
    const Index end = std::min(ds.size(), start + chunk);
    rows.clear();
    for (Index n = start; n < end; ++n) rows.push_back(n);
    const Batch b = make_batch(ds, rows);
    const MatrixD logits = forward_sequence(model, b.inputs).logits;
    loss_sum += loss(model.classifier.head, logits, b.labels) * static_cast<double>(end - start);
    const std::vector<int> pred = predict_labels(model.classifier.head, logits);
    out.predictions.insert(out.predictions.end(), pred.begin(), pred.end());
  }
  out.loss = loss_sum / static_cast<double>(ds.size());
  out.accuracy = accuracy(out.predictions, ds.labels);
  out.f1 = binary_f1(out.predictions, ds.labels);
  return out;
}

// -- stages -----------------------------------------------------------------

namespace {

double validation_metric(const ModelD& m, const SequenceDataset& val, const TrainConfig& cfg) {
  const EvalMetrics e = evaluate(m, val);
  return cfg.early_stop.use_f1 ? e.f1 : e.accuracy;
}

LrSchedule schedule_for(const TrainConfig& cfg) {
  return cfg.schedule ? *cfg.schedule : default_schedule(cfg.e1 + cfg.e2 + cfg.e3);
}

}  // namespace

StageResult train_stage(ModelD model, const SequenceDataset& train, const SequenceDataset& val, Stage stage,
                        const SparsityPlan* plan, const SupportMasks* masks, const TrainConfig& cfg, int epochs,
                        int epoch_offset, const EpochCallback& on_epoch) {
  validate(cfg);
  if (stage == Stage::II && plan == nullptr) throw std::invalid_argument("stage II requires a sparsity plan");
  if (stage == Stage::III && masks == nullptr) throw std::invalid_argument("stage III requires support masks");
  if (train.size() == 0) throw std::invalid_argument("train_stage: empty training set");
  if (train.D != model.input_dim()) throw DimensionError("train_stage: dataset and model feature counts differ");

  StageResult res;
  if (stage == Stage::III) res.masks = *masks;
  if (stage == Stage::II) validate_plan(model, *plan);
  if (stage == Stage::III) apply_masks(model, res.masks);

  const LrSchedule sched = schedule_for(cfg);
  const Rng shuffle_root = Rng(cfg.seed, 0x7a1).split(static_cast<std::uint64_t>(stage));
  OptimizerState state;
  BackwardOptions bopt;
  bopt.clip_norm = cfg.clip_norm;
  std::vector<Index> order(static_cast<std::size_t>(train.size()));
  std::int64_t step = 0;
  double best = -std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int e = 0; e < epochs; ++e) {
    const int global_epoch = epoch_offset + e;
    const double lr = learning_rate(cfg.lr, sched, global_epoch);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
    Rng rng = shuffle_root.split(static_cast<std::uint64_t>(global_epoch));
    rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t len = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
      const Batch b = make_batch(train, std::span(order).subspan(start, len));
      ForwardResult<double> fw = forward_sequence(model, b.inputs);
      const double l = loss(model.classifier.head, fw.logits, b.labels);
      if (!std::isfinite(l)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(global_epoch) + ", step " +
                           std::to_string(step));
      }
      loss_sum += l * static_cast<double>(len);
      GradientsD g = backward_sequence(model, fw.trace, b.labels, bopt).grads;
      const bool mask_grads = stage == Stage::III || (stage == Stage::II && cfg.mask_between_projections && !res.masks.empty());
      if (mask_grads) apply_masks(g, res.masks);
      optimizer_step(model, g, state, cfg.optimizer, lr);
      ++step;
      if (stage == Stage::III) {
        apply_masks(model, res.masks);
      } else if (stage == Stage::II && step % cfg.projection_period == 0) {
        Projection<double> p = project_params(std::move(model), *plan);
        model = std::move(p.model);
        res.masks = std::move(p.masks);
      }
    }

    HistoryRecord rec;
    rec.epoch = global_epoch;
    rec.stage = static_cast<int>(stage);
    rec.loss = loss_sum / static_cast<double>(train.size());
    rec.lr = lr;
    record_gates(model, rec);
    if (stage == Stage::II) {
      const Projection<double> p = project_params(model, *plan);
      rec.val_metric = validation_metric(p.model, val, cfg);
      rec.nnz = nonzeros_per_tensor(p.model);
      if (on_epoch) on_epoch(rec, p.model, p.masks);
    } else {
      rec.val_metric = validation_metric(model, val, cfg);
      rec.nnz = nonzeros_per_tensor(model);
      if (on_epoch) on_epoch(rec, model, res.masks);
    }
    res.history.push_back(rec);
    ++res.epochs_run;

    if (stage != Stage::I && cfg.early_stop.enabled) {
      if (rec.val_metric > best) {
        best = rec.val_metric;
        since_best = 0;
      } else if (++since_best >= cfg.early_stop.patience) {
        break;
      }
    }
  }
  if (stage == Stage::II) {
    Projection<double> p = project_params(std::move(model), *plan);
    model = std::move(p.model);
    res.masks = std::move(p.masks);
  }
  res.model = std::move(model);
  return res;
}

TrainedModel train_full(ModelD model, const SequenceDataset& train, const SequenceDataset& val,
                        const SparsityPlan& plan, const TrainConfig& cfg) {
  validate(cfg);
  validate_plan(model, plan);
  if (val.size() == 0) throw std::invalid_argument("train_full: empty validation split");
  TrainedModel out;
  bool have_best = false;
  auto keeper = [&](bool eligible) -> EpochCallback {
    if (!eligible) return {};
    return [&](const HistoryRecord& r, const ModelD& m, const SupportMasks& masks) {
      if (have_best && !(r.val_metric > out.best_val_metric)) return;
      have_best = true;
      out.best_val_metric = r.val_metric;
      out.best_epoch = r.epoch;
      out.best_stage = r.stage;
      out.model = m;
      out.masks = masks;
    };
  };
  auto append = [&](const StageResult& r) { out.history.insert(out.history.end(), r.history.begin(), r.history.end()); };

  int offset = 0;
  int last_stage = 1;
  StageResult s1 = train_stage(std::move(model), train, val, Stage::I, nullptr, nullptr, cfg, cfg.e1, offset,
                               keeper(plan.is_dense()));
  offset += s1.epochs_run;
  append(s1);
  ModelD current = std::move(s1.model);
  SupportMasks masks;
  if (cfg.e2 > 0) {
    StageResult s2 = train_stage(std::move(current), train, val, Stage::II, &plan, nullptr, cfg, cfg.e2, offset,
                                 keeper(true));
    offset += s2.epochs_run;
    append(s2);
    current = std::move(s2.model);
    masks = std::move(s2.masks);
    last_stage = 2;
  } else {
    Projection<double> p = project_params(std::move(current), plan);
    current = std::move(p.model);
    masks = std::move(p.masks);
  }
  if (cfg.e3 > 0) {
    StageResult s3 = train_stage(std::move(current), train, val, Stage::III, nullptr, &masks, cfg, cfg.e3, offset,
                                 keeper(true));
    offset += s3.epochs_run;
    append(s3);
    current = std::move(s3.model);
    last_stage = 3;
  }
  if (!have_best) {
    out.model = current;
    out.masks = masks;
    out.best_val_metric = validation_metric(current, val, cfg);
    out.best_epoch = offset - 1;
    out.best_stage = last_stage;
  }
  out.final_model = std::move(current);
  return out;
}

ModelD init_for_plan(ModelShape shape, const SparsityPlan& plan, std::uint64_t seed) {
  shape.rank_w = plan.rank_w.value_or(0);
  shape.rank_u = plan.rank_u.value_or(0);
  Rng rng(seed, 0x1417);
  return init_model<double>(shape, rng);
}

}  // namespace fastgrnn
