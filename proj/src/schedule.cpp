// SPDX-License-Identifier: Apache-2.0
#include "ld3m/schedule.hpp"

#include <cmath>

#include "ld3m/errors.hpp"

namespace ld3m {

double NoiseSchedule::noise_coeff(std::size_t t) const {
  const double s2 = sigma2_at(t);
  return convention == NoiseConvention::variance ? s2 : std::sqrt(s2);
}

NoiseSchedule make_linear_schedule(std::size_t T, double beta_start, double beta_end, SigmaPolicy policy,
                                   NoiseConvention convention) {
  if (T < 1) throw ConfigError("schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("schedule needs 0 < beta_start <= beta_end < 1, got " + std::to_string(beta_start) +
                      ", " + std::to_string(beta_end));
  }
  NoiseSchedule s;
  s.T = T;
  s.convention = convention;
  double g = 1.0;
  for (std::size_t t = 1; t <= T; ++t) {
    // A single step takes the final value so noising reaches the configured end.
    const double b = T == 1 ? beta_end
                            : beta_start + (beta_end - beta_start) * static_cast<double>(t - 1) /
                                               static_cast<double>(T - 1);
    const double a = 1.0 - b;
    const double g_prev = g;
    g *= a;
    s.beta.push_back(b);
    s.alpha.push_back(a);
    s.gamma.push_back(g);
    switch (policy) {
      case SigmaPolicy::zero: s.sigma2.push_back(0.0); break;
      case SigmaPolicy::beta: s.sigma2.push_back(b); break;
      case SigmaPolicy::scaled: s.sigma2.push_back(b * (1.0 - g_prev) / (1.0 - g)); break;
    }
  }
  return s;
}

SigmaPolicy parse_sigma_policy(const std::string& s) {
  if (s == "zero") return SigmaPolicy::zero;
  if (s == "beta") return SigmaPolicy::beta;
  if (s == "scaled") return SigmaPolicy::scaled;
  throw ConfigError("unknown sigma_policy '" + s + "' (zero|beta|scaled)");
}

std::string to_string(SigmaPolicy p) {
  switch (p) {
    case SigmaPolicy::zero: return "zero";
    case SigmaPolicy::beta: return "beta";
    case SigmaPolicy::scaled: return "scaled";
  }
  return "?";
}

NoiseConvention parse_noise_convention(const std::string& s) {
  if (s == "variance") return NoiseConvention::variance;
  if (s == "stddev") return NoiseConvention::stddev;
  throw ConfigError("unknown noise_convention '" + s + "' (variance|stddev)");
}

std::string to_string(NoiseConvention c) { return c == NoiseConvention::variance ? "variance" : "stddev"; }

}  // namespace ld3m
