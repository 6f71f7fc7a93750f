// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>

#include "ld3m/models.hpp"
#include "ld3m/schedule.hpp"

namespace ld3m {

enum class ChainMode { standard, ld3m };

ChainMode parse_chain_mode(const std::string& s);
std::string to_string(ChainMode m);

// f(z_t, c, gamma_t) -> predicted noise, same shape as z_t.
using NoisePredictor = std::function<Var(const Var& z, const Var& c, double gamma)>;

NoisePredictor predictor_of(const Denoiser& f);

struct ChainState {
  std::size_t t = 0;
  Var z;
  Var anchor;  // z_T, shared by every skip term of one sampling phase
};

/// z_T = sqrt(gamma_T) Z + sqrt(1 - gamma_T) noise. The returned state uses
/// z_T as its own anchor.
ChainState forward_diffuse(const Var& Z, const NoiseSchedule& schedule, const Array& noise);

/// mu = (z_t - (1 - alpha_t) / sqrt(1 - gamma_t) f(c, z_t, gamma_t)) / sqrt(alpha_t)
Var predict_mean(const NoisePredictor& f, const Var& c, const Var& z, std::size_t t, const NoiseSchedule& schedule);

// z_{t-1} = mu + coeff_t eps_t
ChainState reverse_step_standard(const ChainState& state, const NoisePredictor& f, const Var& c,
                                 const NoiseSchedule& schedule, const Array& eps);

struct Ld3mStepOptions {
  bool zero_skip = false;    // skip weight forced to 0 (mean weight 1)
  bool detach_mean = false;  // mu contributes no gradient
  bool detach_skip = false;  // the anchor contributes no gradient through the skip edge
};

// z_{t-1} = (1 - t/T) mu + (t/T) z_T + coeff_t eps_t
ChainState reverse_step_ld3m(const ChainState& state, const NoisePredictor& f, const Var& c,
                             const NoiseSchedule& schedule, const Array& eps, const Ld3mStepOptions& opts = {});

struct ChainOptions {
  bool checkpoint = true;
  Ld3mStepOptions step;
  // When set, the reverse step t (1-based) uses these options instead of `step`.
  std::function<Ld3mStepOptions(std::size_t t)> step_for;
};

struct ChainResult {
  Var z0;
  Var zT;
  Var decoded;  // undefined from run_chain
};

struct ChainNoise {
  Array forward;
  std::vector<Array> eps;  // eps[t - 1] for step t
};

// Forward noise from rng.split(0), eps_t from rng.split(t).
ChainNoise draw_chain_noise(const Shape& shape, std::size_t T, const Rng& rng);

/// forward_diffuse then T reverse steps, each its own replayable segment when
/// opts.checkpoint is set.
ChainResult run_chain(const Var& Z, const Var& c, const NoisePredictor& f, const NoiseSchedule& schedule,
                      ChainMode mode, const ChainNoise& noise, const ChainOptions& opts = {});

/// run_chain with the bundle's denoiser followed by the decoder (a segment of
/// its own). The bundle must be frozen.
ChainResult sample_chain(const Var& Z, const Var& c, const ModelBundle& bundle, const NoiseSchedule& schedule,
                         ChainMode mode, const Rng& rng, const ChainOptions& opts = {});

}  // namespace ld3m
