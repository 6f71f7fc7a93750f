// SPDX-License-Identifier: Apache-2.0
#include "ld3m/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>

#include "ld3m/errors.hpp"
#include "ld3m/ops.hpp"

namespace ld3m {

double GradProbeReport::norm(std::size_t T, ChainMode mode) const {
  for (const auto& r : rows) {
    if (r.T == T && r.mode == mode) return r.grad_norm_Z;
  }
  throw ContractError("probe report has no row for T=" + std::to_string(T) + " mode=" + to_string(mode));
}

ProbeInputs make_probe_inputs(const ModelBundle& bundle) {
  const std::size_t C = bundle.num_classes, D = bundle.image_dim();
  Array patterns(Shape{C, D}), target(Shape{C, D});
  for (std::size_t k = 0; k < C; ++k) {
    const Array p = render_pattern(k, bundle.side);
    const Array q = render_pattern((k + 1) % C, bundle.side);
    for (std::size_t i = 0; i < D; ++i) {
      patterns.at(k, i) = p[i];
      target.at(k, i) = q[i];
    }
  }
  ad::NoGrad ng;
  ProbeInputs in;
  in.Z = bundle.ae.encode(Var(patterns)).value();
  std::vector<std::size_t> rows(C);
  for (std::size_t k = 0; k < C; ++k) rows[k] = k;
  in.c = ad::take_rows(bundle.embedder.table, rows).value();
  in.target = std::move(target);
  return in;
}

GradProbeReport probe_grad_norms(const ModelBundle& bundle, const std::vector<std::size_t>& t_grid,
                                 const std::vector<ChainMode>& modes, std::uint64_t seed, const ProbeSpec& spec) {
  if (t_grid.empty() || modes.empty()) throw ConfigError("probe: empty T grid or mode list");
  ScheduleFamily family = spec.family;
  if (!spec.keep_sigma_policy) family.policy = SigmaPolicy::zero;
  const ProbeInputs in = make_probe_inputs(bundle);

  GradProbeReport report;
  report.spec = spec;
  report.seed = seed;
  report.rows.resize(t_grid.size() * modes.size());
  std::vector<std::exception_ptr> errors(report.rows.size());
  const auto cells = static_cast<long>(report.rows.size());
#pragma omp parallel for schedule(dynamic) if (spec.parallel)
  for (long cell = 0; cell < cells; ++cell) {
    const std::size_t i = static_cast<std::size_t>(cell);
    ProbeRow& row = report.rows[i];
    row.T = t_grid[i / modes.size()];
    row.mode = modes[i % modes.size()];
    try {
      const auto t0 = std::chrono::steady_clock::now();
      const NoiseSchedule schedule = family.make(row.T);
      Var Z(in.Z, true), c(in.c, true);
      ChainOptions opts;
      opts.checkpoint = spec.checkpoint;
      const ChainResult r = sample_chain(Z, c, bundle, schedule, row.mode, Rng(seed), opts);
      Var loss = ad::mse(r.decoded, Var(in.target));
      auto g = ad::grad(loss, std::vector<Var>{Z, c});
      row.grad_norm_Z = g[0].value().norm();
      row.grad_norm_c = g[1].value().norm();
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return report;
}

PathReport decompose_paths(const ModelBundle& bundle, const NoiseSchedule& schedule, std::uint64_t seed) {
  const ProbeInputs in = make_probe_inputs(bundle);
  const ChainNoise noise = draw_chain_noise(in.Z.shape(), schedule.T, Rng(seed));
  const NoisePredictor f = predictor_of(bundle.denoiser);
  const Autoencoder ae = bundle.ae;

  auto grad_norm = [&](const ChainOptions& opts) {
    Var Z(in.Z, true), c(in.c, false);
    const ChainResult r = run_chain(Z, c, f, schedule, ChainMode::ld3m, noise, opts);
    Var loss = ad::mse(ae.decode(r.z0), Var(in.target));
    return ad::grad(loss, std::vector<Var>{Z})[0].value().norm();
  };

  PathReport report;
  report.T = schedule.T;
  report.full_norm = grad_norm(ChainOptions{});
  for (std::size_t t = schedule.T; t >= 1; --t) {
    PathRow row;
    row.t = t;
    ChainOptions skip;
    skip.step_for = [t](std::size_t s) {
      Ld3mStepOptions o;
      o.detach_mean = s == t;
      o.detach_skip = s != t;
      return o;
    };
    row.skip_norm = grad_norm(skip);
    ChainOptions chain;
    chain.step_for = [t](std::size_t s) {
      Ld3mStepOptions o;
      o.detach_skip = s <= t;
      return o;
    };
    row.chain_norm = grad_norm(chain);
    report.rows.push_back(row);
  }
  return report;
}

std::optional<double> SnrReport::median_snr() const {
  std::vector<double> v;
  for (const auto& s : snr) {
    if (s) v.push_back(*s);
  }
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SnrReport probe_snr(const std::vector<double>& norms, std::size_t window) {
  if (window < 2 || window > norms.size()) {
    throw ContractError("probe_snr: window " + std::to_string(window) + " must be in [2, " +
                        std::to_string(norms.size()) + "]");
  }
  SnrReport r;
  r.window = window;
  r.norms = norms;
  const auto w = static_cast<double>(window);
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (i + 1 < window) {
      r.snr.push_back(std::nullopt);
      r.rolling_mean.push_back(std::nan(""));
      r.rolling_std.push_back(std::nan(""));
      continue;
    }
    double mean = 0.0;
    for (std::size_t k = i + 1 - window; k <= i; ++k) mean += norms[k];
    mean /= w;
    double var = 0.0;
    for (std::size_t k = i + 1 - window; k <= i; ++k) var += (norms[k] - mean) * (norms[k] - mean);
    const double sd = std::sqrt(var / w);
    r.rolling_mean.push_back(mean);
    r.rolling_std.push_back(sd);
    r.snr.push_back(sd > 0.0 ? std::optional<double>(mean / sd) : std::nullopt);
  }
  return r;
}

FdResult fd_check(const FdBuilder& build, double h, double tolerance, std::size_t trials, std::uint64_t seed,
                  double floor) {
  if (!(h > 0.0)) throw ConfigError("fd_check: h must be positive");
  FdResult res;
  Rng rng(seed);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Rng r = rng.split(trial);
    FdGraph g = build(r);
    std::vector<Var> vars;
    for (const auto& a : g.inputs) vars.emplace_back(a, true);
    Var loss = g.loss(vars);
    if (loss.size() != 1) throw ContractError("fd_check: the loss must be a scalar");
    const auto analytic = ad::grad(loss, vars);

    ad::NoGrad ng;
    auto eval = [&](std::vector<Array>& values) {
      std::vector<Var> in;
      for (const auto& a : values) in.emplace_back(a, false);
      const double v = g.loss(in).item();
      if (!std::isfinite(v)) throw DomainError("fd_check: non-finite loss during perturbation");
      return v;
    };
    std::vector<Array> values = g.inputs;
    for (std::size_t i = 0; i < values.size(); ++i) {
      for (std::size_t j = 0; j < values[i].size(); ++j) {
        const double x = values[i][j];
        values[i][j] = x + h;
        const double fp = eval(values);
        values[i][j] = x - h;
        const double fm = eval(values);
        values[i][j] = x;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[i].value()[j];
        const double denom = std::max({std::abs(a), std::abs(numeric), floor});
        const double rel = std::abs(a - numeric) / denom;
        res.max_rel_err = std::max(res.max_rel_err, rel);
        if (!(rel <= tolerance)) res.passed = false;
        ++res.coordinates;
      }
    }
  }
  return res;
}

}  // namespace ld3m
