// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "ld3m/diagnostics.hpp"
#include "ld3m/distill.hpp"
#include "ld3m/eval.hpp"
#include "ld3m/io.hpp"

namespace ld3m {

struct CorpusConfig {
  CorpusSpec spec;
  std::string idx_images;  // both set: ingest IDX files instead of rendering
  std::string idx_labels;
};

struct ScheduleConfig {
  std::size_t T = 10;
  ScheduleFamily family;

  NoiseSchedule make() const { return family.make(T); }
};

struct ModelConfig {
  BundleSpec bundle;
  double recon_gate = 0.02;
};

struct ProbeConfig {
  std::vector<std::size_t> t_grid = {10, 20, 30, 40, 50, 60, 70, 80, 90};
  std::vector<std::string> modes = {"standard", "ld3m"};
};

/// Everything a run depends on. Sub-seeds are derived from global_seed.
struct RunConfig {
  std::uint64_t global_seed = 0;
  std::string output_dir = "ld3m-out";
  CorpusConfig corpus;
  ScheduleConfig schedule;
  ModelConfig model;
  DistillConfig distill;
  ExpertSpec experts;
  EvalSpec eval;
  ProbeConfig probe;

  std::uint64_t corpus_seed() const { return derive_seed(global_seed, 1); }
  std::uint64_t bundle_seed() const { return derive_seed(global_seed, 2); }
  std::uint64_t expert_seed() const { return derive_seed(global_seed, 3); }
  std::uint64_t distill_seed() const { return derive_seed(global_seed, 4); }
  std::uint64_t eval_seed() const { return derive_seed(global_seed, 5); }
  std::uint64_t probe_seed() const { return derive_seed(global_seed, 6); }
  std::uint64_t init_seed() const { return derive_seed(global_seed, 7); }

  // The distill section with the run seed and schedule length filled in.
  DistillConfig effective_distill() const;
  EvalSpec effective_eval() const;
};

// Missing keys keep their defaults; unknown keys raise ConfigError.
RunConfig config_from_json(const json& j);
json config_to_json(const RunConfig& cfg);

ToyCorpus load_corpus(const CorpusConfig& cfg, std::uint64_t seed);

}  // namespace ld3m
