// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ld3m/distill.hpp"

namespace ld3m {

struct EvalSpec {
  std::vector<std::string> archs = witness_archs();
  std::size_t num_seeds = 5;
  std::size_t steps = 300;
  double lr = 0.01;
  double momentum = 0.0;
  std::size_t batch = 0;  // 0: min(64, 8 * M)
  std::uint64_t seed = 0;
  bool parallel = true;

  bool same_protocol(const EvalSpec& o) const {
    return archs == o.archs && num_seeds == o.num_seeds && steps == o.steps && lr == o.lr &&
           momentum == o.momentum && batch == o.batch && seed == o.seed;
  }
};

struct ArchResult {
  std::string arch;
  std::vector<double> accuracies;  // one per seed, seed order
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
};

struct EvalResult {
  std::vector<ArchResult> rows;
  EvalSpec spec;
  std::uint64_t fingerprint = 0;  // of the evaluated images and labels

  // Mean over every (arch, seed) cell.
  double mean() const;
  double std() const;
};

double sample_std(std::span<const double> xs);

/// Trains every (arch, seed) cell from scratch on the given images and reports
/// test-split accuracy. Cells are independent and may run concurrently.
EvalResult evaluate_images(const Array& images, std::span<const int> labels, const ToyCorpus& corpus,
                           const EvalSpec& spec);

// Decodes through the chain the set was distilled with, clamps, then evaluates.
EvalResult evaluate_distilled(const DistilledSet& ds, const ModelBundle& bundle, const NoiseSchedule& schedule,
                              DistillMode mode, const ToyCorpus& corpus, const EvalSpec& spec);

// Baseline: ipc random real training images per class.
EvalResult evaluate_random_real(const ToyCorpus& corpus, std::size_t ipc, std::uint64_t seed, const EvalSpec& spec);

// Decoding seed shared by evaluation and `decode` so both see the same images.
constexpr std::uint64_t kDecodeSeed = 0x5eed;

struct ConditionResult {
  std::string label;
  EvalResult result;
};

struct ComparisonRow {
  std::string label;
  double mean = 0.0;
  double std = 0.0;
  std::optional<std::size_t> duplicate_of;  // earlier row with identical inputs
};

struct Comparison {
  std::vector<ComparisonRow> rows;       // input order
  std::vector<std::vector<double>> delta;  // delta[i][j] = mean_i - mean_j
};

/// Rows keep their input order. All results must share one protocol.
Comparison compare_conditions(const std::vector<ConditionResult>& conditions);

}  // namespace ld3m
