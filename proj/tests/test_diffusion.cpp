// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "ld3m/diffusion.hpp"
#include "ld3m/errors.hpp"
#include "ld3m/ops.hpp"

using namespace ld3m;

namespace {

Var scalar_var(double v, bool rg = false) { return Var(Array::vector({v}), rg); }

NoisePredictor constant_predictor(double k) {
  return [k](const Var& z, const Var&, double) { return ad::constant(Array(z.shape(), k)); };
}

// f(z) = w z
NoisePredictor linear_predictor(double w) {
  return [w](const Var& z, const Var&, double) { return ad::scale(z, w); };
}

bool bit_equal(const Array& a, const Array& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("linear schedule examples") {
  const NoiseSchedule s = make_linear_schedule(2, 0.1, 0.2, SigmaPolicy::zero);
  CHECK(s.alpha_at(1) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(s.alpha_at(2) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(s.gamma_at(1) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(s.gamma_at(2) == doctest::Approx(0.72).epsilon(1e-15));
  CHECK(s.gamma_at(0) == 1.0);
  CHECK(s.sigma2_at(1) == 0.0);
  CHECK(s.sigma2_at(2) == 0.0);

  const NoiseSchedule one = make_linear_schedule(1, 0.3, 0.3, SigmaPolicy::beta);
  CHECK(one.gamma_at(1) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(one.sigma2_at(1) == doctest::Approx(0.3).epsilon(1e-15));

  const NoiseSchedule sc = make_linear_schedule(3, 0.1, 0.3, SigmaPolicy::scaled);
  for (std::size_t t = 1; t <= 3; ++t) {
    const double expect = sc.beta_at(t) * (1.0 - sc.gamma_at(t - 1)) / (1.0 - sc.gamma_at(t));
    CHECK(sc.sigma2_at(t) == doctest::Approx(expect).epsilon(1e-15));
  }
  CHECK(sc.noise_coeff(2) == sc.sigma2_at(2));
  const NoiseSchedule sd = make_linear_schedule(3, 0.1, 0.3, SigmaPolicy::scaled, NoiseConvention::stddev);
  CHECK(sd.noise_coeff(2) == doctest::Approx(std::sqrt(sc.sigma2_at(2))).epsilon(1e-15));

  CHECK_THROWS_AS(make_linear_schedule(0, 0.1, 0.2, SigmaPolicy::zero), ConfigError);
  CHECK_THROWS_AS(make_linear_schedule(5, 0.0, 0.2, SigmaPolicy::zero), ConfigError);
  CHECK_THROWS_AS(make_linear_schedule(5, 0.3, 0.2, SigmaPolicy::zero), ConfigError);
  CHECK_THROWS_AS(make_linear_schedule(5, 0.1, 1.0, SigmaPolicy::zero), ConfigError);
}

TEST_CASE("forward_diffuse") {
  NoiseSchedule s = make_linear_schedule(1, 0.75, 0.75, SigmaPolicy::zero);  // gamma_T = 0.25
  Var Z = scalar_var(2.0, true);
  ChainState st = forward_diffuse(Z, s, Array::vector({0.0}));
  CHECK(st.z.value()[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(st.t == 1);
  CHECK(st.anchor.id() == st.z.id());

  st = forward_diffuse(Z, s, Array::vector({1.0}));
  CHECK(st.z.value()[0] == doctest::Approx(1.0 + std::sqrt(0.75)).epsilon(1e-15));

  Var Zm(Array::matrix(2, 3, {1, 2, 3, 4, 5, 6}), true);
  const NoiseSchedule s4 = make_linear_schedule(4, 0.1, 0.2, SigmaPolicy::zero);
  ChainState m = forward_diffuse(Zm, s4, Array(Shape{2, 3}));
  auto g = ad::grad(ad::sum(m.z), std::vector<Var>{Zm});
  for (double v : g[0].value().data()) CHECK(v == doctest::Approx(std::sqrt(s4.gamma_at(4))).epsilon(1e-15));

  CHECK_THROWS_AS(forward_diffuse(Zm, s4, Array(Shape{3, 2})), DimensionError);
}

TEST_CASE("predict_mean hand cases") {
  // alpha = 0.64 at t = 1
  NoiseSchedule s = make_linear_schedule(1, 0.36, 0.36, SigmaPolicy::zero);
  Var c = scalar_var(0.0);
  CHECK(predict_mean(constant_predictor(0.0), c, scalar_var(1.0), 1, s).value()[0] ==
        doctest::Approx(1.25).epsilon(1e-15));

  // three hand-evaluated cases of (z - (1-a)/sqrt(1-g) f) / sqrt(a)
  NoiseSchedule s3 = make_linear_schedule(3, 0.1, 0.3, SigmaPolicy::zero);
  // alpha = (0.9, 0.8, 0.7), gamma = (0.9, 0.72, 0.504)
  struct Case {
    std::size_t t;
    double z, f, expect;
  };
  const Case cases[] = {
      {1, 0.5, 0.2, (0.5 - 0.1 / std::sqrt(0.1) * 0.2) / std::sqrt(0.9)},
      {2, -1.0, 0.7, (-1.0 - 0.2 / std::sqrt(0.28) * 0.7) / std::sqrt(0.8)},
      {3, 2.0, -0.3, (2.0 + 0.3 / std::sqrt(0.496) * 0.3) / std::sqrt(0.7)},
  };
  for (const auto& k : cases) {
    CHECK(predict_mean(constant_predictor(k.f), c, scalar_var(k.z), k.t, s3).value()[0] ==
          doctest::Approx(k.expect).epsilon(1e-13));
  }

  // 1 - alpha = 0 leaves z unchanged
  NoiseSchedule flat = s3;
  flat.alpha[0] = 1.0;
  flat.gamma[0] = 0.5;
  CHECK(predict_mean(constant_predictor(123.0), c, scalar_var(0.7), 1, flat).value()[0] == 0.7);

  NoiseSchedule degenerate = s3;
  degenerate.gamma[1] = 1.0;
  CHECK_THROWS_AS(predict_mean(constant_predictor(0.0), c, scalar_var(1.0), 2, degenerate), DomainError);
  CHECK_THROWS_AS(predict_mean(constant_predictor(0.0), c, scalar_var(1.0), 0, s3), ContractError);
  CHECK_THROWS_AS(predict_mean(constant_predictor(0.0), c, scalar_var(1.0), 4, s3), ContractError);
}

TEST_CASE("reverse_step_standard examples") {
  // mu = 0.5 via f = 0 and alpha = 1 is not buildable, so use alpha = 0.64 and z = 0.4.
  NoiseSchedule s = make_linear_schedule(1, 0.36, 0.36, SigmaPolicy::zero);
  s.sigma2[0] = 0.01;
  Var c = scalar_var(0.0);
  ChainState st{1, scalar_var(0.4), Var()};
  ChainState out = reverse_step_standard(st, constant_predictor(0.0), c, s, Array::vector({2.0}));
  CHECK(out.t == 0);
  CHECK(out.z.value()[0] == doctest::Approx(0.52).epsilon(1e-14));

  s.sigma2[0] = 0.0;
  out = reverse_step_standard(st, constant_predictor(0.0), c, s, Array::vector({2.0}));
  CHECK(out.z.value()[0] == predict_mean(constant_predictor(0.0), c, st.z, 1, s).value()[0]);

  ChainState done{0, scalar_var(0.4), Var()};
  CHECK_THROWS_AS(reverse_step_standard(done, constant_predictor(0.0), c, s, Array::vector({0.0})), ContractError);
}

TEST_CASE("reverse_step_ld3m examples") {
  const NoiseSchedule s = make_linear_schedule(4, 0.1, 0.2, SigmaPolicy::zero);
  Var c = scalar_var(0.0);
  const Array eps0 = Array::vector({0.0});

  // t = T: mean weight 0, output is z_T exactly.
  ChainState top{4, scalar_var(-0.37), scalar_var(1.91)};
  CHECK(reverse_step_ld3m(top, linear_predictor(0.3), c, s, eps0).z.value()[0] == 1.91);

  // t = T/2, mu = 1, z_T = 3 -> 2. mu = 1 requires z = sqrt(alpha) with f = 0.
  ChainState mid{2, scalar_var(std::sqrt(s.alpha_at(2))), scalar_var(3.0)};
  CHECK(reverse_step_ld3m(mid, constant_predictor(0.0), c, s, eps0).z.value()[0] ==
        doctest::Approx(2.0).epsilon(1e-15));

  ChainState missing{2, scalar_var(1.0), Var()};
  CHECK_THROWS_AS(reverse_step_ld3m(missing, constant_predictor(0.0), c, s, eps0), ContractError);
  ChainState done{0, scalar_var(1.0), scalar_var(1.0)};
  CHECK_THROWS_AS(reverse_step_ld3m(done, constant_predictor(0.0), c, s, eps0), ContractError);
}

TEST_CASE("linear denoiser chain matches the closed-form product") {
  const double w = 0.37;
  for (std::size_t T : {1u, 3u, 10u}) {
    const NoiseSchedule s = make_linear_schedule(T, 0.02, 0.3, SigmaPolicy::zero);
    Rng rng(T);
    ChainNoise noise = draw_chain_noise(Shape{2, 3}, T, rng);
    Var Z(rng.split(99).normal_array(Shape{2, 3}), true);
    Var c(Array(Shape{2, 1}));
    ChainResult r = run_chain(Z, c, linear_predictor(w), s, ChainMode::standard, noise, ChainOptions{false});
    double k = 1.0;
    for (std::size_t t = 1; t <= T; ++t) {
      const double ct = (1.0 - s.alpha_at(t)) / std::sqrt(1.0 - s.gamma_at(t));
      k *= (1.0 - ct * w) / std::sqrt(s.alpha_at(t));
    }
    for (std::size_t i = 0; i < Z.size(); ++i) {
      CHECK(r.z0.value()[i] == doctest::Approx(k * r.zT.value()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero skip weight degenerates to the standard sampler bit-for-bit") {
  const auto& b = testing::tiny_bundle();
  for (std::size_t T : {1u, 5u, 10u}) {
    const NoiseSchedule s = ScheduleFamily{}.make(T);
    Rng rng(T + 40);
    Var Z(rng.split(1).normal_array(Shape{3, b.d_latent()}));
    Var c(rng.split(2).normal_array(Shape{3, b.d_embed()}));
    ChainOptions zero;
    zero.step.zero_skip = true;
    const ChainResult std_r = sample_chain(Z, c, b, s, ChainMode::standard, Rng(7));
    const ChainResult ld_r = sample_chain(Z, c, b, s, ChainMode::ld3m, Rng(7), zero);
    CHECK(bit_equal(std_r.z0.value(), ld_r.z0.value()));
    CHECK(bit_equal(std_r.decoded.value(), ld_r.decoded.value()));
  }
}

TEST_CASE("ld3m step is a pure function of (z_t, anchor, t, c, eps)") {
  const auto& b = testing::tiny_bundle();
  const NoiseSchedule s = ScheduleFamily{}.make(6);
  const NoisePredictor f = predictor_of(b.denoiser);
  Rng rng(3);
  Var Z(rng.split(1).normal_array(Shape{2, b.d_latent()}));
  Var c(rng.split(2).normal_array(Shape{2, b.d_embed()}));
  ChainState st = forward_diffuse(Z, s, rng.split(3).normal_array(Z.shape()));
  const Array eps = rng.split(4).normal_array(Z.shape());

  // Real history: four steps from z_T.
  ChainState real = st;
  for (int i = 0; i < 4; ++i) real = reverse_step_ld3m(real, f, c, s, rng.split(10 + i).normal_array(Z.shape()));
  const Array expect = reverse_step_ld3m(real, f, c, s, eps).z.value();

  // Fabricated history: arrive at the same z_t from unrelated states.
  ChainState fake{6, Var(rng.split(50).normal_array(Z.shape())), st.anchor};
  fake = reverse_step_ld3m(fake, f, c, s, rng.split(51).normal_array(Z.shape()));
  // Same value as the real z_t, but its graph descends from the fabricated states.
  ChainState spliced{real.t, ad::add(ad::scale(fake.z, 0.0), Var(real.z.value())), st.anchor};
  spliced = reverse_step_ld3m(spliced, f, c, s, eps);
  CHECK(bit_equal(spliced.z.value(), expect));
}

TEST_CASE("skip edge Jacobian-vector product equals (t/T) sqrt(gamma_T) v") {
  const auto& b = testing::tiny_bundle();
  const std::size_t T = 8;
  const NoiseSchedule s = ScheduleFamily{}.make(T);
  const NoisePredictor f = predictor_of(b.denoiser);
  Rng rng(11);
  Var Z(rng.split(1).normal_array(Shape{2, b.d_latent()}), true);
  Var c(rng.split(2).normal_array(Shape{2, b.d_embed()}));
  ChainState top = forward_diffuse(Z, s, rng.split(3).normal_array(Z.shape()));
  const Array v = rng.split(4).normal_array(Z.shape());
  for (std::size_t t : {1u, 4u, 8u}) {
    ChainState st{t, Var(rng.split(20 + t).normal_array(Z.shape())), top.anchor};
    Ld3mStepOptions o;
    o.detach_mean = true;
    Var out = reverse_step_ld3m(st, f, c, s, rng.split(30 + t).normal_array(Z.shape()), o).z;
    auto g = ad::grad(ad::dot(out, ad::constant(v)), std::vector<Var>{Z});
    const double k = static_cast<double>(t) / T * std::sqrt(s.gamma_at(T));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(g[0].value()[i] - k * v[i]) <= 1e-10);
  }
}

TEST_CASE("sample_chain contracts") {
  const auto& b = testing::tiny_bundle();
  Rng rng(5);
  Var Z(rng.split(1).normal_array(Shape{3, b.d_latent()}), true);
  Var c(rng.split(2).normal_array(Shape{3, b.d_embed()}), true);

  SUBCASE("T = 1 ld3m with sigma = 0 returns z_T") {
    ScheduleFamily fam;
    fam.policy = SigmaPolicy::zero;
    const NoiseSchedule s = fam.make(1);
    const ChainResult r = sample_chain(Z, c, b, s, ChainMode::ld3m, Rng(9));
    const ChainNoise n = draw_chain_noise(Z.shape(), 1, Rng(9));
    const double g = s.gamma_at(1);
    for (std::size_t i = 0; i < Z.size(); ++i) {
      CHECK(r.z0.value()[i] == doctest::Approx(std::sqrt(g) * Z.value()[i] + std::sqrt(1 - g) * n.forward[i]));
    }
  }

  SUBCASE("frozen parameters receive no gradient") {
    const NoiseSchedule s = ScheduleFamily{}.make(4);
    const ChainResult r = sample_chain(Z, c, b, s, ChainMode::ld3m, Rng(9));
    Var loss = ad::mean(ad::square(r.decoded));
    ad::backward(loss);
    CHECK(Z.grad().has_value());
    CHECK(c.grad().has_value());
    for (const auto& p : b.denoiser.net().parameters()) CHECK_FALSE(p.grad().has_value());
    for (const auto& p : b.ae.decoder.parameters()) CHECK_FALSE(p.grad().has_value());
    CHECK_FALSE(b.embedder.table.grad().has_value());
  }

  SUBCASE("modes differ, runs repeat bit-identically") {
    const NoiseSchedule s = ScheduleFamily{}.make(5);
    const ChainResult a = sample_chain(Z, c, b, s, ChainMode::standard, Rng(2));
    const ChainResult l = sample_chain(Z, c, b, s, ChainMode::ld3m, Rng(2));
    const ChainResult l2 = sample_chain(Z, c, b, s, ChainMode::ld3m, Rng(2));
    CHECK_FALSE(bit_equal(a.z0.value(), l.z0.value()));
    CHECK(bit_equal(l.z0.value(), l2.z0.value()));
    CHECK(bit_equal(l.decoded.value(), l2.decoded.value()));
  }

  SUBCASE("unfrozen bundle is rejected") {
    ModelBundle open = b;
    open.frozen = false;
    CHECK_THROWS_AS(sample_chain(Z, c, open, ScheduleFamily{}.make(2), ChainMode::ld3m, Rng(1)), ContractError);
  }
}

TEST_CASE("checkpointed chain gradients equal plain backprop") {
  const auto& b = testing::tiny_bundle();
  const NoiseSchedule s = ScheduleFamily{}.make(6);
  Rng rng(8);
  const Array z0 = rng.split(1).normal_array(Shape{3, b.d_latent()});
  const Array c0 = rng.split(2).normal_array(Shape{3, b.d_embed()});
  std::vector<Array> grads[2];
  for (bool ck : {false, true}) {
    Var Z(z0, true), c(c0, true);
    ChainOptions o;
    o.checkpoint = ck;
    const ChainResult r = sample_chain(Z, c, b, s, ChainMode::ld3m, Rng(4), o);
    auto g = ad::grad(ad::mean(ad::square(r.decoded)), std::vector<Var>{Z, c});
    grads[ck] = {g[0].value(), g[1].value()};
  }
  for (int k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < grads[0][k].size(); ++i) {
      CHECK(grads[1][k][i] == doctest::Approx(grads[0][k][i]).epsilon(1e-12));
    }
  }
}
