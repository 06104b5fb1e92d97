// SPDX-License-Identifier: Apache-2.0
#include "fastgrnn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace fastgrnn {

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(const std::string& cell, std::size_t line_no, std::size_t col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw std::runtime_error("csv line " + std::to_string(line_no) + ", column " + std::to_string(col + 1) +
                             ": not a finite number: '" + cell + "'");
  }
  return v;
}

}  // namespace

SequenceDataset load_csv_dataset(const std::string& path, const CsvSchema& schema, Split split) {
  if (schema.T < 1 || schema.D < 1) throw std::invalid_argument("csv schema: T and D must be positive");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset '" + path + "'");
  const auto width = static_cast<std::size_t>(schema.T * schema.D + 1);
  const std::size_t label_col =
      schema.label_col < 0 ? width - 1 : static_cast<std::size_t>(schema.label_col);
  if (label_col >= width) throw std::invalid_argument("csv schema: label column outside the row");

  std::vector<double> values;
  std::vector<int> labels;
  std::vector<std::size_t> label_lines;
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = schema.has_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const std::vector<std::string> cells = split_fields(line);
    if (cells.size() != width) {
      throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                               " columns, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < width; ++c) {
      const double v = parse_number(cells[c], line_no, c);
      if (c == label_col) {
        if (v != std::floor(v) || v < 0 || v > 1e9) {
          throw std::runtime_error("csv line " + std::to_string(line_no) + ": label '" + cells[c] +
                                   "' is not a non-negative integer");
        }
        labels.push_back(static_cast<int>(v));
        label_lines.push_back(line_no);
      } else {
        values.push_back(v);
      }
    }
  }
  if (labels.empty()) throw std::runtime_error("dataset '" + path + "' contains no rows");

  SequenceDataset ds;
  ds.split = split;
  ds.T = schema.T;
  ds.D = schema.D;
  const int max_label = *std::max_element(labels.begin(), labels.end());
  ds.L = schema.num_classes > 0 ? schema.num_classes : static_cast<Index>(max_label) + 1;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= ds.L) {
      throw std::runtime_error("csv line " + std::to_string(label_lines[i]) + ": label " + std::to_string(labels[i]) +
                               " outside [0, " + std::to_string(ds.L) + ")");
    }
  }
  const auto n = static_cast<Index>(labels.size());
  ds.features = Eigen::Map<MatrixD>(values.data(), n, schema.T * schema.D);
  ds.labels = std::move(labels);
  return ds;
}

void save_csv_dataset(const std::string& path, const SequenceDataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << std::setprecision(17);
  for (Index n = 0; n < ds.size(); ++n) {
    for (Index c = 0; c < ds.features.cols(); ++c) out << ds.features(n, c) << ',';
    out << ds.labels[static_cast<std::size_t>(n)] << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

NormStats fit_normalization(const SequenceDataset& train) {
  if (train.split != Split::Train) {
    throw std::invalid_argument("normalization statistics may only be fitted on the train split, got " +
                                std::string(to_string(train.split)));
  }
  if (train.size() == 0) throw std::invalid_argument("normalization: empty train split");
  const Index D = train.D;
  const double count = static_cast<double>(train.size() * train.T);
  NormStats s;
  s.mean.assign(static_cast<std::size_t>(D), 0.0);
  s.std.assign(static_cast<std::size_t>(D), 0.0);
  // Two passes: mean first, then centred second moment.
  for (Index n = 0; n < train.size(); ++n)
    for (Index t = 0; t < train.T; ++t)
      for (Index d = 0; d < D; ++d) s.mean[d] += train.at(n, t, d);
  for (auto& m : s.mean) m /= count;
  for (Index n = 0; n < train.size(); ++n)
    for (Index t = 0; t < train.T; ++t)
      for (Index d = 0; d < D; ++d) {
        const double c = train.at(n, t, d) - s.mean[d];
        s.std[d] += c * c;
      }
  for (auto& v : s.std) v = std::max(std::sqrt(v / count), 1e-8);
  return s;
}

void apply_normalization(SequenceDataset& ds, const NormStats& stats) {
  if (static_cast<Index>(stats.mean.size()) != ds.D || static_cast<Index>(stats.std.size()) != ds.D) {
    throw DimensionError("normalization stats have " + std::to_string(stats.mean.size()) + " features, dataset has " +
                         std::to_string(ds.D));
  }
  for (Index n = 0; n < ds.size(); ++n)
    for (Index t = 0; t < ds.T; ++t)
      for (Index d = 0; d < ds.D; ++d) {
        double& v = ds.features(n, t * ds.D + d);
        v = (v - stats.mean[d]) / stats.std[d];
      }
  ds.norm = stats;
}

NormStats normalize(SequenceDataset& train, std::span<SequenceDataset* const> others) {
  const NormStats stats = fit_normalization(train);
  apply_normalization(train, stats);
  for (SequenceDataset* ds : others) apply_normalization(*ds, stats);
  return stats;
}

SequenceDataset subset(const SequenceDataset& ds, std::span<const Index> rows) {
  SequenceDataset out;
  out.split = ds.split;
  out.T = ds.T;
  out.D = ds.D;
  out.L = ds.L;
  out.norm = ds.norm;
  out.features.resize(static_cast<Index>(rows.size()), ds.features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= ds.size()) throw std::out_of_range("subset: row index out of range");
    out.features.row(static_cast<Index>(i)) = ds.features.row(rows[i]);
    out.labels.push_back(ds.labels[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

std::pair<SequenceDataset, SequenceDataset> split_train_val(const SequenceDataset& ds, double train_fraction,
                                                            std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train fraction must be in (0, 1)");
  std::vector<Index> idx(static_cast<std::size_t>(ds.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Index>(i);
  Rng rng(seed, 0x5e11);
  rng.shuffle(idx);
  const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(idx.size())));
  if (n_train == 0 || n_train >= idx.size()) throw std::invalid_argument("split leaves an empty partition");
  SequenceDataset tr = subset(ds, std::span(idx).first(n_train));
  SequenceDataset va = subset(ds, std::span(idx).subspan(n_train));
  tr.split = Split::Train;
  va.split = Split::Val;
  return {std::move(tr), std::move(va)};
}

Batch make_batch(const SequenceDataset& ds, std::span<const Index> rows) {
  Batch b;
  const auto B = static_cast<Index>(rows.size());
  b.inputs.assign(static_cast<std::size_t>(ds.T), MatrixD(ds.D, B));
  b.labels.reserve(rows.size());
  for (Index j = 0; j < B; ++j) {
    const Index n = rows[static_cast<std::size_t>(j)];
    if (n < 0 || n >= ds.size()) throw std::out_of_range("make_batch: row index out of range");
    for (Index t = 0; t < ds.T; ++t)
      for (Index d = 0; d < ds.D; ++d) b.inputs[static_cast<std::size_t>(t)](d, j) = ds.features(n, t * ds.D + d);
    b.labels.push_back(ds.labels[static_cast<std::size_t>(n)]);
  }
  return b;
}

Batch full_batch(const SequenceDataset& ds) {
  std::vector<Index> rows(static_cast<std::size_t>(ds.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<Index>(i);
  return make_batch(ds, rows);
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "delayed_recall") return SynthKind::DelayedRecall;
  if (name == "noisy_majority") return SynthKind::NoisyMajority;
  throw std::invalid_argument("unknown synthetic task '" + name + "'");
}

const char* to_string(SynthKind k) {
  return k == SynthKind::DelayedRecall ? "delayed_recall" : "noisy_majority";
}

SequenceDataset synth_task(SynthKind kind, Index T, Index N, std::uint64_t seed, const SynthOptions& opt) {
  if (T < 2) throw std::invalid_argument("synth_task: T must be >= 2");
  if (N < 1) throw std::invalid_argument("synth_task: N must be >= 1");
  if (opt.D < 1) throw std::invalid_argument("synth_task: D must be >= 1");
  Rng root(seed, 0x5717);
  Rng label_rng = root.split(1);
  Rng noise_rng = root.split(2);
  Rng sign_rng = root.split(3);

  std::vector<int> labels(static_cast<std::size_t>(N));
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
  label_rng.shuffle(labels);

  SequenceDataset ds;
  ds.split = Split::Train;
  ds.T = T;
  ds.D = opt.D;
  ds.L = 2;
  ds.features = MatrixD::Zero(N, T * opt.D);
  for (Index n = 0; n < N; ++n) {
    const int y = labels[static_cast<std::size_t>(n)];
    const double token = y == 1 ? 1.0 : -1.0;
    if (kind == SynthKind::DelayedRecall) {
      ds.features(n, 0) = token;
    } else {
      std::vector<double> signs(static_cast<std::size_t>(T));
      double sum = 0.0;
      for (auto& s : signs) {
        s = sign_rng.below(2) == 1 ? 1.0 : -1.0;
        sum += s;
      }
      if (sum * token < 0) {
        for (auto& s : signs) s = -s;
        sum = -sum;
      }
      if (sum == 0.0) {
        // Even T with a tie: flip the first value that disagrees with the label.
        for (auto& s : signs)
          if (s != token) {
            s = token;
            break;
          }
      }
      for (Index t = 0; t < T; ++t) {
        ds.features(n, t * opt.D) = signs[static_cast<std::size_t>(t)] + opt.noise_std * noise_rng.normal();
      }
    }
    for (Index t = 0; t < T; ++t)
      for (Index d = 1; d < opt.D; ++d) ds.features(n, t * opt.D + d) = opt.noise_std * noise_rng.normal();
  }
  ds.labels = std::move(labels);
  return ds;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw DimensionError("accuracy: size mismatch or empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double binary_f1(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw DimensionError("binary_f1: size mismatch or empty");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == 1 && truth[i] == 1) ++tp;
    if (predicted[i] == 1 && truth[i] != 1) ++fp;
    if (predicted[i] != 1 && truth[i] == 1) ++fn;
  }
  if (tp == 0) return 0.0;
  return 2 * tp / (2 * tp + fp + fn);
}

}  // namespace fastgrnn
