// SPDX-License-Identifier: Apache-2.0
#include "ld3m/diffusion.hpp"

#include <cmath>

#include "ld3m/errors.hpp"
#include "ld3m/ops.hpp"

namespace ld3m {

ChainMode parse_chain_mode(const std::string& s) {
  if (s == "standard") return ChainMode::standard;
  if (s == "ld3m") return ChainMode::ld3m;
  throw ConfigError("unknown chain mode '" + s + "' (standard|ld3m)");
}

std::string to_string(ChainMode m) { return m == ChainMode::standard ? "standard" : "ld3m"; }

NoisePredictor predictor_of(const Denoiser& f) {
  return [f](const Var& z, const Var& c, double gamma) { return f.predict(z, c, gamma); };
}

ChainState forward_diffuse(const Var& Z, const NoiseSchedule& schedule, const Array& noise) {
  if (noise.shape() != Z.shape()) {
    throw DimensionError("forward_diffuse: noise " + shape_str(noise.shape()) + " vs Z " + shape_str(Z.shape()));
  }
  const double g = schedule.gamma_at(schedule.T);
  Array scaled_noise = noise;
  for (auto& v : scaled_noise.data()) v *= std::sqrt(1.0 - g);
  Var zT = ad::add(ad::scale(Z, std::sqrt(g)), ad::constant(std::move(scaled_noise)));
  return ChainState{schedule.T, zT, zT};
}

Var predict_mean(const NoisePredictor& f, const Var& c, const Var& z, std::size_t t,
                 const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.T) {
    throw ContractError("predict_mean: t=" + std::to_string(t) + " outside [1, " + std::to_string(schedule.T) + "]");
  }
  const double a = schedule.alpha_at(t);
  const double g = schedule.gamma_at(t);
  if (!(g < 1.0)) throw DomainError("predict_mean: gamma_t = 1 leaves the noise coefficient undefined");
  const double coeff = (1.0 - a) / std::sqrt(1.0 - g);
  Var eps_hat = f(z, c, g);
  if (eps_hat.shape() != z.shape()) throw DimensionError("predict_mean: predictor output shape differs from z_t");
  return ad::scale(ad::sub(z, ad::scale(eps_hat, coeff)), 1.0 / std::sqrt(a));
}

namespace {

void check_step(const ChainState& state, const NoiseSchedule& schedule, const Array& eps) {
  if (state.t == 0) throw ContractError("reverse step requested at t = 0 (step underflow)");
  if (state.t > schedule.T) throw ContractError("reverse step: t exceeds schedule length");
  if (eps.shape() != state.z.shape()) throw DimensionError("reverse step: eps shape differs from z_t");
}

Var scaled_noise(const Array& eps, double k) {
  Array out = eps;
  for (auto& v : out.data()) v *= k;
  return ad::constant(std::move(out));
}

}  // namespace

ChainState reverse_step_standard(const ChainState& state, const NoisePredictor& f, const Var& c,
                                 const NoiseSchedule& schedule, const Array& eps) {
  check_step(state, schedule, eps);
  Var mu = predict_mean(f, c, state.z, state.t, schedule);
  Var z = ad::add(mu, scaled_noise(eps, schedule.noise_coeff(state.t)));
  return ChainState{state.t - 1, z, state.anchor};
}

ChainState reverse_step_ld3m(const ChainState& state, const NoisePredictor& f, const Var& c,
                             const NoiseSchedule& schedule, const Array& eps, const Ld3mStepOptions& opts) {
  check_step(state, schedule, eps);
  if (!state.anchor.defined()) throw ContractError("ld3m reverse step needs the z_T anchor");
  if (state.anchor.shape() != state.z.shape()) throw DimensionError("ld3m reverse step: anchor shape differs");
  const double w_skip =
      opts.zero_skip ? 0.0 : static_cast<double>(state.t) / static_cast<double>(schedule.T);
  const double w_mu = 1.0 - w_skip;
  Var mu;
  if (opts.detach_mean) {
    ad::NoGrad ng;
    mu = predict_mean(f, c, state.z, state.t, schedule);
  } else {
    mu = predict_mean(f, c, state.z, state.t, schedule);
  }
  Var anchor = opts.detach_skip ? state.anchor.detach() : state.anchor;
  Var z = ad::add(ad::add(ad::scale(mu, w_mu), ad::scale(anchor, w_skip)),
                  scaled_noise(eps, schedule.noise_coeff(state.t)));
  return ChainState{state.t - 1, z, state.anchor};
}

ChainNoise draw_chain_noise(const Shape& shape, std::size_t T, const Rng& rng) {
  ChainNoise n;
  Rng fwd = rng.split(0);
  n.forward = fwd.normal_array(shape);
  for (std::size_t t = 1; t <= T; ++t) {
    Rng r = rng.split(t);
    n.eps.push_back(r.normal_array(shape));
  }
  return n;
}

ChainResult run_chain(const Var& Z, const Var& c, const NoisePredictor& f, const NoiseSchedule& schedule,
                      ChainMode mode, const ChainNoise& noise, const ChainOptions& opts) {
  if (noise.eps.size() != schedule.T) throw ContractError("run_chain: need one eps per reverse step");
  ChainState state = forward_diffuse(Z, schedule, noise.forward);
  ChainResult out;
  out.zT = state.anchor;
  const Var anchor = state.anchor;
  for (std::size_t t = schedule.T; t >= 1; --t) {
    const Array& eps = noise.eps[t - 1];
    const Ld3mStepOptions step_opts = opts.step_for ? opts.step_for(t) : opts.step;
    // Owns everything it reads so checkpoint replay is self-contained.
    auto step = [f, schedule, eps, mode, t, step_opts](const std::vector<Var>& in) {
      ChainState s{t, in[0], mode == ChainMode::ld3m ? in[2] : Var()};
      return mode == ChainMode::ld3m ? reverse_step_ld3m(s, f, in[1], schedule, eps, step_opts).z
                                     : reverse_step_standard(s, f, in[1], schedule, eps).z;
    };
    std::vector<Var> inputs{state.z, c};
    if (mode == ChainMode::ld3m) inputs.push_back(anchor);
    Var z = opts.checkpoint ? ad::checkpoint(inputs, step, "reverse_step_" + std::to_string(t)) : step(inputs);
    state = ChainState{t - 1, z, anchor};
  }
  out.z0 = state.z;
  return out;
}

ChainResult sample_chain(const Var& Z, const Var& c, const ModelBundle& bundle, const NoiseSchedule& schedule,
                         ChainMode mode, const Rng& rng, const ChainOptions& opts) {
  if (!bundle.frozen) throw ContractError("sample_chain: the model bundle must be frozen");
  const ChainNoise noise = draw_chain_noise(Z.shape(), schedule.T, rng);
  ChainResult out = run_chain(Z, c, predictor_of(bundle.denoiser), schedule, mode, noise, opts);
  const Autoencoder ae = bundle.ae;
  auto decode = [ae](const std::vector<Var>& in) { return ae.decode(in[0]); };
  out.decoded = opts.checkpoint ? ad::checkpoint({out.z0}, decode, "decode") : decode({out.z0});
  return out;
}

}  // namespace ld3m
