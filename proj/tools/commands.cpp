// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "fastgrnn/diagnostics.hpp"
#include "fastgrnn/integer_engine.hpp"
#include "fastgrnn/model_file.hpp"
#include "fastgrnn/training.hpp"

namespace fastgrnn::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

// JSON has no infinities; non-finite values are written as strings.
ordered_json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

std::optional<Index> parse_rank(const std::string& s, const char* flag) {
  if (s == "full") return std::nullopt;
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || v < 1) throw UsageError(std::string(flag) + " must be 'full' or a positive integer, got '" + s + "'");
  return static_cast<Index>(v);
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what + " path");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " '" + path + "' does not exist");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw std::runtime_error("write to '" + path.string() + "' failed");
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// -- option bundles ---------------------------------------------------------

struct DataOpts {
  std::string train;
  std::string val;
  std::string test;
  Index T = 0;
  Index D = 0;
  Index classes = 0;
  int label_col = -1;
  bool header = false;
  double train_fraction = 0.8;
};

struct TrainOpts {
  DataOpts data;
  std::string arch = "fastgrnn";
  std::string nonlin = "tanh";
  std::string gate_nonlin = "sigmoid";
  std::string head = "softmax";
  Index hidden = 32;
  std::string rw = "full";
  std::string ru = "full";
  double sw = 1.0;
  double su = 1.0;
  int e1 = 100;
  int e2 = 100;
  int e3 = 100;
  double lr = 1e-2;
  std::string optimizer = "momentum";
  Index batch = 100;
  std::uint64_t seed = 0;
  Index proj_period = 20;
  int patience = 25;
  bool no_early_stop = false;
  bool use_f1 = false;
  double clip = 0.0;
  bool mask_between = false;
  double decay_factor = 0.1;
  std::vector<int> decay_at;
  std::string out = "runs";
};

struct EvalOpts {
  std::string model;
  std::string data;
  std::string reference;
  Index T = 0;
  int label_col = -1;
  bool header = false;
};

struct QuantizeOpts {
  std::string model;
  std::string out;
  std::string encoding = "smallest";
};

struct SynthOpts {
  std::string task = "delayed_recall";
  Index T = 100;
  Index N = 500;
  Index D = 2;
  double noise = 1.0;
  std::uint64_t seed = 0;
  std::string out;
};

struct ConditionOpts {
  Index hidden = 16;
  Index D = 4;
  Index T = 20;
  Index t = 1;
  double u_norm = 1.0;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::uint64_t seed = 0;
  std::string out;
};

struct SpectrumOpts {
  std::string arch = "rnn";
  std::string nonlin = "tanh";
  Index hidden = 32;
  Index D = 4;
  Index T = 100;
  std::optional<double> u_norm;
  std::uint64_t seed = 0;
  std::string out;
};

struct AlphaBetaOpts {
  std::string task = "delayed_recall";
  std::vector<Index> horizons = {50, 100, 200};
  Index samples = 600;
  Index hidden = 16;
  Index D = 2;
  double noise = 1.0;
  int e1 = 100;
  double lr = 1e-2;
  std::string optimizer = "adam";
  Index batch = 100;
  std::uint64_t seed = 0;
  std::string out;
};

void add_data_flags(CLI::App* c, DataOpts& d) {
  c->add_option("--train", d.train, "Training CSV (T*D feature columns plus a label)");
  c->add_option("--val", d.val, "Validation CSV; default is a seeded split of --train");
  c->add_option("--test", d.test, "Test CSV");
  c->add_option("--T", d.T, "Sequence length")->check(CLI::PositiveNumber);
  c->add_option("--D", d.D, "Features per step")->check(CLI::PositiveNumber);
  c->add_option("--classes", d.classes, "Number of classes (0 infers from the training labels)");
  c->add_option("--label-col", d.label_col, "Label column, -1 for the last");
  c->add_flag("--header", d.header, "CSV files start with a header row");
  c->add_option("--train-fraction", d.train_fraction, "Share of --train kept for training when --val is absent");
}

void add_train_flags(CLI::App* c, TrainOpts& o) {
  add_data_flags(c, o.data);
  c->add_option("--arch", o.arch, "rnn, fastrnn, fastrnn-vec or fastgrnn")
      ->check(CLI::IsMember({"rnn", "fastrnn", "fastrnn-vec", "fastgrnn"}));
  c->add_option("--nonlin", o.nonlin, "Cell nonlinearity (FastGRNN candidate)");
  c->add_option("--gate-nonlin", o.gate_nonlin, "FastGRNN gate nonlinearity");
  c->add_option("--head", o.head, "softmax or logistic")->check(CLI::IsMember({"softmax", "logistic"}));
  c->add_option("--hidden", o.hidden, "Hidden units")->check(CLI::PositiveNumber);
  c->add_option("--rw", o.rw, "Rank of W, or 'full'");
  c->add_option("--ru", o.ru, "Rank of U, or 'full'");
  c->add_option("--sw", o.sw, "Retained fraction of each W factor");
  c->add_option("--su", o.su, "Retained fraction of each U factor");
  c->add_option("--e1", o.e1, "Stage I epochs");
  c->add_option("--e2", o.e2, "Stage II epochs");
  c->add_option("--e3", o.e3, "Stage III epochs");
  c->add_option("--lr", o.lr, "Base learning rate");
  c->add_option("--optimizer", o.optimizer, "sgd, momentum or adam")->check(CLI::IsMember({"sgd", "momentum", "adam"}));
  c->add_option("--batch", o.batch, "Batch size");
  c->add_option("--seed", o.seed, "Seed for initialisation, splitting and shuffling");
  c->add_option("--proj-period", o.proj_period, "Optimizer steps between stage II projections");
  c->add_option("--patience", o.patience, "Early-stopping patience in epochs");
  c->add_flag("--no-early-stop", o.no_early_stop, "Disable early stopping");
  c->add_flag("--f1", o.use_f1, "Select checkpoints on F1 instead of accuracy");
  c->add_option("--clip", o.clip, "Gradient-norm clip for the standard RNN (0 = off)");
  c->add_flag("--mask-between-projections", o.mask_between, "Keep the stage II support between projections");
  c->add_option("--decay-factor", o.decay_factor, "Learning-rate decay factor");
  c->add_option("--decay-at", o.decay_at, "Global epochs at which the rate decays (default: two thirds through)");
  c->add_option("--out", o.out, "Parent directory of the run directory");
}

// -- train -----------------------------------------------------------------

ordered_json config_json(const TrainOpts& o) {
  ordered_json j;
  j["train"] = o.data.train;
  j["val"] = o.data.val;
  j["test"] = o.data.test;
  j["T"] = o.data.T;
  j["D"] = o.data.D;
  j["classes"] = o.data.classes;
  j["label_col"] = o.data.label_col;
  j["header"] = o.data.header;
  j["train_fraction"] = o.data.train_fraction;
  j["arch"] = o.arch;
  j["nonlin"] = o.nonlin;
  j["gate_nonlin"] = o.gate_nonlin;
  j["head"] = o.head;
  j["hidden"] = o.hidden;
  j["rw"] = o.rw;
  j["ru"] = o.ru;
  j["sw"] = o.sw;
  j["su"] = o.su;
  j["e1"] = o.e1;
  j["e2"] = o.e2;
  j["e3"] = o.e3;
  j["lr"] = o.lr;
  j["optimizer"] = o.optimizer;
  j["batch"] = o.batch;
  j["proj_period"] = o.proj_period;
  j["patience"] = o.patience;
  j["early_stop"] = !o.no_early_stop;
  j["f1"] = o.use_f1;
  j["clip"] = o.clip;
  j["mask_between_projections"] = o.mask_between;
  j["decay_factor"] = o.decay_factor;
  j["decay_at"] = o.decay_at;
  return j;
}

struct ResolvedTrain {
  ModelShape shape;
  SparsityPlan plan;
  TrainConfig cfg;
};

ResolvedTrain resolve(const TrainOpts& o) {
  require_file(o.data.train, "training dataset");
  if (!o.data.val.empty()) require_file(o.data.val, "validation dataset");
  if (!o.data.test.empty()) require_file(o.data.test, "test dataset");
  if (o.data.T < 1 || o.data.D < 1) throw UsageError("--T and --D are required");
  ResolvedTrain r;
  try {
    r.shape.arch = parse_arch(o.arch);
    r.shape.nonlin = parse_nonlin(o.nonlin);
    r.shape.gate_nonlin = parse_nonlin(o.gate_nonlin);
    r.cfg.optimizer.kind = parse_optimizer(o.optimizer);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  r.shape.head = o.head == "logistic" ? Head::Logistic : Head::Softmax;
  r.shape.input_dim = o.data.D;
  r.shape.hidden_dim = o.hidden;
  r.shape.horizon = o.data.T;
  r.plan.rank_w = parse_rank(o.rw, "--rw");
  r.plan.rank_u = parse_rank(o.ru, "--ru");
  r.plan.s_w = o.sw;
  r.plan.s_u = o.su;
  if (!(o.sw > 0.0 && o.sw <= 1.0) || !(o.su > 0.0 && o.su <= 1.0)) throw UsageError("--sw and --su must lie in (0, 1]");
  if (r.plan.rank_w && *r.plan.rank_w > std::min(o.hidden, o.data.D)) throw UsageError("--rw exceeds min(hidden, D)");
  if (r.plan.rank_u && *r.plan.rank_u > o.hidden) throw UsageError("--ru exceeds hidden");
  if (!(o.data.train_fraction > 0.0 && o.data.train_fraction < 1.0)) throw UsageError("--train-fraction must lie in (0, 1)");
  r.cfg.e1 = o.e1;
  r.cfg.e2 = o.e2;
  r.cfg.e3 = o.e3;
  r.cfg.batch_size = o.batch;
  r.cfg.lr = o.lr;
  if (!o.decay_at.empty()) r.cfg.schedule = LrSchedule{o.decay_factor, o.decay_at};
  r.cfg.projection_period = o.proj_period;
  r.cfg.early_stop.enabled = !o.no_early_stop;
  r.cfg.early_stop.patience = o.patience;
  r.cfg.early_stop.use_f1 = o.use_f1;
  r.cfg.seed = o.seed;
  r.cfg.clip_norm = o.clip;
  r.cfg.mask_between_projections = o.mask_between;
  try {
    validate(r.cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return r;
}

ordered_json masks_json(const SupportMasks& masks) {
  ordered_json j = ordered_json::object();
  for (const auto& [name, m] : masks) {
    ordered_json t;
    t["rows"] = m.rows();
    t["cols"] = m.cols();
    t["nnz"] = m.count();
    std::vector<Index> kept;
    for (Index i = 0; i < m.rows(); ++i)
      for (Index k = 0; k < m.cols(); ++k)
        if (m(i, k)) kept.push_back(i * m.cols() + k);
    t["kept"] = kept;
    j[name] = t;
  }
  return j;
}

int cmd_train(const TrainOpts& o, std::ostream& out) {
  const ResolvedTrain r = resolve(o);
  CsvSchema schema{o.data.T, o.data.D, o.data.label_col, o.data.classes, o.data.header};
  SequenceDataset train = load_csv_dataset(o.data.train, schema, Split::Train);
  schema.num_classes = train.L;
  SequenceDataset val;
  if (o.data.val.empty()) {
    auto parts = split_train_val(train, o.data.train_fraction, o.seed);
    train = std::move(parts.first);
    val = std::move(parts.second);
  } else {
    val = load_csv_dataset(o.data.val, schema, Split::Val);
  }
  std::optional<SequenceDataset> test;
  if (!o.data.test.empty()) test = load_csv_dataset(o.data.test, schema, Split::Test);
  std::vector<SequenceDataset*> others{&val};
  if (test) others.push_back(&*test);
  const NormStats norm = normalize(train, others);

  ModelShape shape = r.shape;
  shape.num_classes = train.L;
  if (shape.head == Head::Logistic && train.L != 2) throw UsageError("--head logistic needs two classes");
  const ModelD init = init_for_plan(shape, r.plan, o.seed);
  const TrainedModel tm = train_full(init, train, val, r.plan, r.cfg);

  const ordered_json cfg = config_json(o);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(cfg.dump())));
  const fs::path dir = fs::path(o.out) / ("run-" + std::string(hash) + "-s" + std::to_string(o.seed));
  fs::create_directories(dir);
  ordered_json cfg_file = cfg;
  cfg_file["seed"] = o.seed;
  write_text(dir / "config.json", cfg_file.dump(2) + "\n");
  save_checkpoint((dir / "best.fgrn").string(), Checkpoint{tm.model, tm.masks, norm, o.data.T});
  save_checkpoint((dir / "final.fgrn").string(), Checkpoint{tm.final_model, tm.masks, norm, o.data.T});
  write_text(dir / "masks.json", masks_json(tm.masks).dump() + "\n");
  {
    std::ofstream h(dir / "history.jsonl", std::ios::binary);
    write_history(h, tm.history);
    if (!h) throw std::runtime_error("cannot write history");
  }

  const EvalMetrics vm = evaluate(tm.model, val);
  ordered_json metrics;
  metrics["best_epoch"] = tm.best_epoch;
  metrics["best_stage"] = tm.best_stage;
  metrics["val_accuracy"] = vm.accuracy;
  if (train.L == 2) metrics["val_f1"] = vm.f1;
  out << "run_dir " << dir.string() << "\n";
  out << "best_epoch " << tm.best_epoch << " (stage " << tm.best_stage << ")\n";
  out << "val_accuracy " << fixed(vm.accuracy) << "\n";
  if (train.L == 2) out << "val_f1 " << fixed(vm.f1) << "\n";
  if (test) {
    const EvalMetrics te = evaluate(tm.model, *test);
    metrics["test_accuracy"] = te.accuracy;
    out << "test_accuracy " << fixed(te.accuracy) << "\n";
    if (train.L == 2) {
      metrics["test_f1"] = te.f1;
      out << "test_f1 " << fixed(te.f1) << "\n";
    }
  }
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  return kOk;
}

// -- eval ------------------------------------------------------------------

int cmd_eval(const EvalOpts& o, std::ostream& out) {
  require_file(o.model, "model");
  require_file(o.data, "dataset");
  const std::vector<std::uint8_t> bytes = read_file(o.model);
  const FileKind kind = peek_kind(bytes);
  using Clock = std::chrono::steady_clock;

  auto schema_for = [&](Index T, Index D, Index L) {
    const Index t = o.T > 0 ? o.T : T;
    if (t < 1) throw UsageError("the model does not record its sequence length; pass --T");
    return CsvSchema{t, D, o.label_col, L, o.header};
  };
  auto report = [&](const SequenceDataset& ds, std::span<const int> pred, std::size_t size_bytes, double seconds) {
    out << "sequences " << ds.size() << "\n";
    out << "accuracy " << fixed(accuracy(pred, ds.labels)) << "\n";
    if (ds.L == 2) out << "f1 " << fixed(binary_f1(pred, ds.labels)) << "\n";
    out << "model_bytes " << size_bytes << "\n";
    out << "model_kb " << fixed(static_cast<double>(size_bytes) / 1024.0, 3) << "\n";
    out << "mean_inference_us " << fixed(1e6 * seconds / static_cast<double>(std::max<Index>(ds.size(), 1)), 2) << "\n";
  };

  if (kind == FileKind::Checkpoint) {
    const Checkpoint ck = decode_checkpoint(bytes);
    SequenceDataset ds = load_csv_dataset(o.data, schema_for(ck.horizon, ck.model.input_dim(), ck.model.num_classes()),
                                          Split::Test);
    if (ck.norm) apply_normalization(ds, *ck.norm);
    const auto t0 = Clock::now();
    const EvalMetrics m = evaluate(ck.model, ds);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    out << "path float\n";
    report(ds, m.predictions, bytes.size(), secs);
    out << "loss " << fixed(m.loss, 6) << "\n";
    return kOk;
  }

  const QuantizedModel qm = decode_quantized(bytes);
  SizeBreakdown size = quantized_size(qm, EncodingPolicy::Smallest);
  if (size.total_bytes != bytes.size()) size = quantized_size(qm, EncodingPolicy::ByteIndex);
  if (size.total_bytes != bytes.size()) throw FormatError("size accounting disagrees with the file length");
  const SequenceDataset ds = load_csv_dataset(o.data, schema_for(qm.horizon, qm.input_dim, qm.num_classes), Split::Test);
  integer::IntegerEngine engine(to_integer_model(qm));
  std::vector<int> pred(static_cast<std::size_t>(ds.size()));
  std::vector<std::vector<std::int16_t>> inputs;
  inputs.reserve(pred.size());
  for (Index n = 0; n < ds.size(); ++n) {
    std::vector<double> row(ds.features.row(n).data(), ds.features.row(n).data() + ds.features.cols());
    inputs.push_back(quantize_input(qm, row));
  }
  const auto t0 = Clock::now();
  for (std::size_t n = 0; n < pred.size(); ++n) pred[n] = engine.run(inputs[n], static_cast<std::size_t>(ds.T));
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  out << "path integer\n";
  report(ds, pred, size.total_bytes, secs);
  if (!o.reference.empty()) {
    require_file(o.reference, "reference model");
    const Checkpoint ref = load_checkpoint(o.reference);
    SequenceDataset rds = ds;
    if (ref.norm) apply_normalization(rds, *ref.norm);
    const EvalMetrics rm = evaluate(ref.model, rds);
    out << "reference_accuracy " << fixed(rm.accuracy) << "\n";
    out << "agreement " << fixed(accuracy(pred, rm.predictions)) << "\n";
  }
  return kOk;
}

// -- quantize --------------------------------------------------------------

int cmd_quantize(const QuantizeOpts& o, std::ostream& out) {
  require_file(o.model, "model");
  if (o.out.empty()) throw UsageError("missing --out path");
  const Checkpoint ck = load_checkpoint(o.model);
  const QuantizedModel qm = quantize_model(ck.model, ck.norm, ck.horizon);
  const EncodingPolicy policy = parse_encoding_policy(o.encoding);
  save_quantized(o.out, qm, policy);
  const SizeBreakdown sb = quantized_size(qm, policy);
  out << std::left << std::setw(8) << "tensor" << std::setw(12) << "encoding" << std::setw(10) << "shape"
      << std::setw(8) << "nnz"
      << "bytes\n";
  for (const BlockSize& b : sb.blocks) {
    out << std::setw(8) << b.name << std::setw(12) << to_string(b.encoding) << std::setw(10)
        << (std::to_string(b.rows) + "x" + std::to_string(b.cols)) << std::setw(8) << b.nnz << b.bytes << "\n";
  }
  out << "header_bytes " << sb.header_bytes << "\n";
  out << "total_bytes " << sb.total_bytes << "\n";
  out << "total_kb " << fixed(static_cast<double>(sb.total_bytes) / 1024.0, 3) << "\n";
  return kOk;
}

// -- synth -----------------------------------------------------------------

int cmd_synth(const SynthOpts& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("missing --out path");
  SynthKind kind;
  try {
    kind = parse_synth_kind(o.task);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (o.T < 2 || o.N < 1 || o.D < 1) throw UsageError("synth needs T >= 2, N >= 1 and D >= 1");
  const SequenceDataset ds = synth_task(kind, o.T, o.N, o.seed, SynthOptions{o.D, o.noise});
  save_csv_dataset(o.out, ds);
  out << "wrote " << ds.size() << " sequences (T=" << ds.T << ", D=" << ds.D << ") to " << o.out << "\n";
  return kOk;
}

// -- diag ------------------------------------------------------------------

void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_text(path, text);
  }
}

int cmd_condition(const ConditionOpts& o, std::ostream& out) {
  ConditionInstance spec;
  spec.hidden = o.hidden;
  spec.input_dim = o.D;
  spec.T = o.T;
  spec.t = o.t;
  spec.u_norm = o.u_norm;
  spec.alpha = o.alpha;
  spec.beta = o.beta;
  spec.seed = o.seed;
  if (o.t < 1 || o.t > o.T) throw UsageError("--t must lie in [1, T]");
  if (!(o.u_norm > 0.0)) throw UsageError("--u-norm must be positive");
  const ConditioningReport r = condition_study(spec);
  out << "kappa " << r.kappa << "\n";
  out << "bound " << r.bound << (r.vacuous ? " (vacuous)" : "") << "\n";
  out << "alpha " << r.alpha << "\n";
  out << "beta " << r.beta << "\n";
  if (!o.out.empty()) write_text(o.out, to_json(r) + "\n");
  return kOk;
}

int cmd_spectrum(const SpectrumOpts& o, std::ostream& out) {
  SpectrumSpec spec;
  try {
    spec.arch = parse_arch(o.arch);
    spec.nonlin = parse_nonlin(o.nonlin);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  spec.hidden = o.hidden;
  spec.input_dim = o.D;
  spec.T = o.T;
  spec.u_norm = o.u_norm;
  spec.seed = o.seed;
  const std::vector<double> norms = random_gradient_spectrum(spec);
  ordered_json j;
  j["arch"] = o.arch;
  j["T"] = o.T;
  ordered_json a = ordered_json::array();
  for (double v : norms) a.push_back(number(v));
  j["norms"] = a;
  j["ratio"] = number(spectrum_ratio(norms));
  emit(o.out, j.dump() + "\n", out);
  return kOk;
}

int cmd_alphabeta(const AlphaBetaOpts& o, std::ostream& out) {
  AlphaBetaStudy study;
  try {
    study.task = parse_synth_kind(o.task);
    study.train.optimizer.kind = parse_optimizer(o.optimizer);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (o.horizons.empty()) throw UsageError("--horizons is empty");
  for (Index T : o.horizons)
    if (T < 2) throw UsageError("every horizon must be at least 2");
  study.horizons = o.horizons;
  study.samples = o.samples;
  study.hidden = o.hidden;
  study.synth = SynthOptions{o.D, o.noise};
  study.train.e1 = o.e1;
  study.train.lr = o.lr;
  study.train.batch_size = o.batch;
  study.train.seed = o.seed;
  try {
    validate(study.train);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::string text;
  for (const AlphaBetaRecord& r : alpha_beta_study(study)) text += to_json(r) + "\n";
  emit(o.out, text, out);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"FastRNN / FastGRNN training, compression and integer inference"};
  app.name(args.empty() ? "fastgrnn" : args[0]);
  app.set_config("--config", "", "TOML config file ([train] section); command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  TrainOpts train;
  EvalOpts eval;
  QuantizeOpts quant;
  SynthOpts synth;
  ConditionOpts cond;
  SpectrumOpts spec;
  AlphaBetaOpts ab;

  CLI::App* c_train = app.add_subcommand("train", "Run stages I-III and write a run directory");
  add_train_flags(c_train, train);
  c_train->fallthrough();

  CLI::App* c_eval = app.add_subcommand("eval", "Evaluate a float or quantized model on a CSV dataset");
  c_eval->add_option("--model", eval.model, "Model file")->required();
  c_eval->add_option("--data", eval.data, "Dataset CSV (raw, unnormalized)")->required();
  c_eval->add_option("--reference", eval.reference, "Float checkpoint to measure agreement against");
  c_eval->add_option("--T", eval.T, "Sequence length (default: the model's)");
  c_eval->add_option("--label-col", eval.label_col, "Label column, -1 for the last");
  c_eval->add_flag("--header", eval.header, "CSV starts with a header row");

  CLI::App* c_quant = app.add_subcommand("quantize", "Export a trained checkpoint to the int8 format");
  c_quant->add_option("--model", quant.model, "Float checkpoint")->required();
  c_quant->add_option("--out", quant.out, "Quantized model path")->required();
  c_quant->add_option("--encoding", quant.encoding, "Sparse block layouts: smallest or byte-index")
      ->check(CLI::IsMember({"smallest", "byte-index"}));

  CLI::App* c_synth = app.add_subcommand("synth", "Write a synthetic sequence task as CSV");
  c_synth->add_option("--task", synth.task, "delayed_recall or noisy_majority");
  c_synth->add_option("--T", synth.T, "Sequence length");
  c_synth->add_option("--N", synth.N, "Number of sequences");
  c_synth->add_option("--D", synth.D, "Features per step");
  c_synth->add_option("--noise", synth.noise, "Noise standard deviation");
  c_synth->add_option("--seed", synth.seed, "Seed");
  c_synth->add_option("--out", synth.out, "CSV path")->required();

  CLI::App* c_diag = app.add_subcommand("diag", "Conditioning and gradient diagnostics");
  c_diag->require_subcommand(1);
  CLI::App* c_cond = c_diag->add_subcommand("condition", "Condition number of the backpropagation product");
  c_cond->add_option("--hidden", cond.hidden, "Hidden units");
  c_cond->add_option("--D", cond.D, "Input features");
  c_cond->add_option("--T", cond.T, "Sequence length");
  c_cond->add_option("--t", cond.t, "First step of the product");
  c_cond->add_option("--u-norm", cond.u_norm, "Spectral norm of U");
  c_cond->add_option("--alpha", cond.alpha, "alpha (default 1 / (T max ||U^T D||))");
  c_cond->add_option("--beta", cond.beta, "beta (default 1 - alpha)");
  c_cond->add_option("--seed", cond.seed, "Seed");
  c_cond->add_option("--out", cond.out, "JSON report path");

  CLI::App* c_spec = c_diag->add_subcommand("spectrum", "||dL/dh_t|| over t for a random model");
  c_spec->add_option("--arch", spec.arch, "Architecture");
  c_spec->add_option("--nonlin", spec.nonlin, "Nonlinearity");
  c_spec->add_option("--hidden", spec.hidden, "Hidden units");
  c_spec->add_option("--D", spec.D, "Input features");
  c_spec->add_option("--T", spec.T, "Sequence length");
  c_spec->add_option("--u-norm", spec.u_norm, "Rescale U to this spectral norm");
  c_spec->add_option("--seed", spec.seed, "Seed");
  c_spec->add_option("--out", spec.out, "JSON report path (default stdout)");

  CLI::App* c_ab = c_diag->add_subcommand("alphabeta", "Learnt alpha and beta of FastRNN across horizons");
  c_ab->add_option("--task", ab.task, "delayed_recall or noisy_majority");
  c_ab->add_option("--horizons", ab.horizons, "Sequence lengths")->delimiter(',');
  c_ab->add_option("--samples", ab.samples, "Sequences per horizon (80/20 train/validation)");
  c_ab->add_option("--hidden", ab.hidden, "Hidden units");
  c_ab->add_option("--D", ab.D, "Features per step");
  c_ab->add_option("--noise", ab.noise, "Noise standard deviation");
  c_ab->add_option("--e1", ab.e1, "Epochs");
  c_ab->add_option("--lr", ab.lr, "Learning rate");
  c_ab->add_option("--optimizer", ab.optimizer, "sgd, momentum or adam");
  c_ab->add_option("--batch", ab.batch, "Batch size");
  c_ab->add_option("--seed", ab.seed, "Seed");
  c_ab->add_option("--out", ab.out, "JSON-lines output path (default stdout)");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("fastgrnn");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (c_train->parsed()) return cmd_train(train, out);
    if (c_eval->parsed()) return cmd_eval(eval, out);
    if (c_quant->parsed()) return cmd_quantize(quant, out);
    if (c_synth->parsed()) return cmd_synth(synth, out);
    if (c_cond->parsed()) return cmd_condition(cond, out);
    if (c_spec->parsed()) return cmd_spectrum(spec, out);
    if (c_ab->parsed()) return cmd_alphabeta(ab, out);
    err << "error: no command given\n";
    return kUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const PreconditionError& e) {
    err << "precondition failed: " << e.what() << "\n";
    return kPrecondition;
  } catch (const DimensionError& e) {
    err << "dimension mismatch: " << e.what() << "\n";
    return kPrecondition;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace fastgrnn::cli
