// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ld3m/diffusion.hpp"

namespace ld3m {

struct ProbeRow {
  std::size_t T = 0;
  ChainMode mode = ChainMode::standard;
  double grad_norm_Z = 0.0;
  double grad_norm_c = 0.0;
  double wall_ms = 0.0;
};

struct ProbeSpec {
  ScheduleFamily family;
  // The probe chain is deterministic (sigma^2 = 0) unless this is set.
  bool keep_sigma_policy = false;
  bool checkpoint = true;
  bool parallel = true;
};

struct GradProbeReport {
  std::vector<ProbeRow> rows;  // T-major, modes in request order
  ProbeSpec spec;
  std::uint64_t seed = 0;

  // grad_norm_Z of the row for (T, mode); throws if absent.
  double norm(std::size_t T, ChainMode mode) const;
};

/// Fixed probe inputs: Z encodes the clean class patterns, c the matching
/// embedder rows, the target is the next class's pattern.
struct ProbeInputs {
  Array Z, c, target;
};

ProbeInputs make_probe_inputs(const ModelBundle& bundle);

/// ||dL/dZ|| and ||dL/dc|| with L = mse(D(z_0), target), one chain per
/// (T, mode) from the same inputs and noise.
GradProbeReport probe_grad_norms(const ModelBundle& bundle, const std::vector<std::size_t>& t_grid,
                                 const std::vector<ChainMode>& modes, std::uint64_t seed, const ProbeSpec& spec = {});

struct PathRow {
  std::size_t t = 0;
  double skip_norm = 0.0;   // through the skip edge z_T -> z_{t-1} alone
  double chain_norm = 0.0;  // through mu_theta at step t alone
};

struct PathReport {
  std::size_t T = 0;
  std::vector<PathRow> rows;  // t = T .. 1
  double full_norm = 0.0;
};

/// Per-step split of dL/dZ for the ld3m chain. skip_t keeps only the skip edge
/// of step t (mu_t and every other skip edge detached); chain_t keeps the mean
/// edge of step t (its own and every later skip edge detached). The two need
/// not sum to the full gradient.
PathReport decompose_paths(const ModelBundle& bundle, const NoiseSchedule& schedule, std::uint64_t seed);

struct SnrReport {
  std::size_t window = 0;
  std::vector<double> norms;
  std::vector<std::optional<double>> snr;  // undefined before a full window or when std = 0
  std::vector<double> rolling_mean;
  std::vector<double> rolling_std;  // population

  std::optional<double> median_snr() const;
};

SnrReport probe_snr(const std::vector<double>& norms, std::size_t window = 25);

// A loss over a set of inputs, rebuilt from scratch on every call.
struct FdGraph {
  std::vector<Array> inputs;
  std::function<Var(const std::vector<Var>&)> loss;
};

using FdBuilder = std::function<FdGraph(Rng&)>;

struct FdResult {
  bool passed = true;
  double max_rel_err = 0.0;
  std::size_t coordinates = 0;
};

/// Central differences on every input coordinate against the analytic
/// gradient. Relative error is |a - n| / max(|a|, |n|, floor).
FdResult fd_check(const FdBuilder& build, double h, double tolerance, std::size_t trials, std::uint64_t seed,
                  double floor = 1e-6);

}  // namespace ld3m
