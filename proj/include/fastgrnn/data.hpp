// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fastgrnn/bptt.hpp"

namespace fastgrnn {

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

const char* to_string(Split s);

struct NormStats {
  std::vector<double> mean;  // one per feature
  std::vector<double> std;
};

/// Fixed-length sequences stored row per sequence, time-major within a row:
/// features(n, t * D + d) is feature d of step t (0-based).
struct SequenceDataset {
  Split split = Split::Train;
  Index T = 0;
  Index D = 0;
  Index L = 0;
  MatrixD features;
  std::vector<int> labels;
  std::optional<NormStats> norm;

  Index size() const { return static_cast<Index>(labels.size()); }
  double at(Index n, Index t, Index d) const { return features(n, t * D + d); }
};

struct CsvSchema {
  Index T = 0;
  Index D = 0;
  /// Column holding the label; -1 is the last column.
  int label_col = -1;
  /// Number of classes; 0 infers max(label) + 1.
  Index num_classes = 0;
  bool has_header = false;
};

/// Parses a rectangular numeric CSV with T*D feature columns plus one label
/// column per row. Errors name the offending 1-based line.
SequenceDataset load_csv_dataset(const std::string& path, const CsvSchema& schema, Split split = Split::Train);

/// Writes the layout load_csv_dataset reads (label last).
void save_csv_dataset(const std::string& path, const SequenceDataset& ds);

/// Per-feature mean and standard deviation over every step of every train
/// sequence. Only train splits are accepted. The std is floored at 1e-8.
NormStats fit_normalization(const SequenceDataset& train);

/// z-scores every feature with the given stats and records them on ds.
void apply_normalization(SequenceDataset& ds, const NormStats& stats);

/// Fits on train and applies to train and each other split.
NormStats normalize(SequenceDataset& train, std::span<SequenceDataset* const> others = {});

/// Seeded shuffle, then the first ceil(train_fraction * N) rows go to train
/// and the rest to validation.
std::pair<SequenceDataset, SequenceDataset> split_train_val(const SequenceDataset& ds, double train_fraction,
                                                            std::uint64_t seed);

SequenceDataset subset(const SequenceDataset& ds, std::span<const Index> rows);

struct Batch {
  Sequence<double> inputs;  // T matrices of D x B
  std::vector<int> labels;
};

Batch make_batch(const SequenceDataset& ds, std::span<const Index> rows);
Batch full_batch(const SequenceDataset& ds);

enum class SynthKind : std::uint8_t { DelayedRecall = 0, NoisyMajority = 1 };

SynthKind parse_synth_kind(const std::string& name);
const char* to_string(SynthKind k);

struct SynthOptions {
  Index D = 2;
  double noise_std = 1.0;
};

/// delayed_recall: channel 0 carries the class token (+1 / -1) at the first
/// step and is 0 afterwards; the remaining channels are Gaussian noise.
/// noisy_majority: channel 0 is +-1 plus Gaussian noise and the label is the
/// majority sign of its clean values; other channels are noise. Labels are
/// balanced to within one and the output is a pure function of the seed.
SequenceDataset synth_task(SynthKind kind, Index T, Index N, std::uint64_t seed, const SynthOptions& opt = {});

/// Fraction of positions where predicted == truth.
double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// F1 score of class 1.
double binary_f1(std::span<const int> predicted, std::span<const int> truth);

}  // namespace fastgrnn
