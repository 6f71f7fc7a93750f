// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ld3m {

enum class SigmaPolicy { zero, beta, scaled };

// Which per-step quantity multiplies the injected noise eps_t.
enum class NoiseConvention { variance, stddev };

/// Per-step coefficients, 1-based in t. gamma(0) is defined as 1.
struct NoiseSchedule {
  std::size_t T = 0;
  std::vector<double> beta, alpha, gamma, sigma2;  // element t-1 holds step t
  NoiseConvention convention = NoiseConvention::variance;

  double beta_at(std::size_t t) const { return beta.at(t - 1); }
  double alpha_at(std::size_t t) const { return alpha.at(t - 1); }
  double gamma_at(std::size_t t) const { return t == 0 ? 1.0 : gamma.at(t - 1); }
  double sigma2_at(std::size_t t) const { return sigma2.at(t - 1); }
  // Coefficient on eps_t in a reverse step.
  double noise_coeff(std::size_t t) const;
};

NoiseSchedule make_linear_schedule(std::size_t T, double beta_start, double beta_end, SigmaPolicy policy,
                                   NoiseConvention convention = NoiseConvention::variance);

/// Schedules for any T sharing one beta range and noise policy.
struct ScheduleFamily {
  double beta_start = 0.005;
  double beta_end = 0.08;
  SigmaPolicy policy = SigmaPolicy::scaled;
  NoiseConvention convention = NoiseConvention::variance;

  NoiseSchedule make(std::size_t T) const {
    return make_linear_schedule(T, beta_start, beta_end, policy, convention);
  }
};

SigmaPolicy parse_sigma_policy(const std::string& s);
std::string to_string(SigmaPolicy p);
NoiseConvention parse_noise_convention(const std::string& s);
std::string to_string(NoiseConvention c);

}  // namespace ld3m
