// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "ld3m/distill.hpp"
#include "ld3m/errors.hpp"
#include "ld3m/ops.hpp"

using namespace ld3m;

namespace {

bool same(const Array& a, const Array& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

// Logistic witness on 1-pixel images: W is 2x1, b is 2.
WitnessNet scalar_logistic(double w0, double w1, double b0, double b1) {
  WitnessNet net = WitnessNet::build("logistic", 1, 2, 0);
  net.params()[0] = Var(Array::matrix(2, 1, {w0, w1}), true);
  net.params()[1] = Var(Array::vector({b0, b1}), true);
  return net;
}

// Mean cross-entropy gradient of the scalar logistic model, flattened as [W, b].
std::vector<double> logistic_grad(const std::vector<double>& th, const std::vector<double>& x,
                                  const std::vector<int>& y) {
  std::vector<double> g(4, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double l0 = th[0] * x[i] + th[2], l1 = th[1] * x[i] + th[3];
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
    const double p[2] = {e0 / (e0 + e1), e1 / (e0 + e1)};
    for (int k = 0; k < 2; ++k) {
      const double r = p[k] - (y[i] == k ? 1.0 : 0.0);
      g[k] += r * x[i] / static_cast<double>(x.size());
      g[2 + k] += r / static_cast<double>(x.size());
    }
  }
  return g;
}

double cosine_distance_ref(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return 1.0 - ab / std::sqrt(aa * bb);
}

DistillConfig tiny_config(Algorithm a, DistillMode m) {
  DistillConfig cfg;
  cfg.algorithm = a;
  cfg.mode = m;
  cfg.T = 4;
  cfg.batch_real = 24;
  cfg.iterations = 3;
  cfg.recon_gate = 1.0;
  cfg.seed = 17;
  return cfg;
}

ExpertSpec tiny_experts() {
  ExpertSpec e;
  e.num_experts = 2;
  e.epochs = 6;
  e.batch = 12;
  return e;
}

}  // namespace

TEST_CASE("loss_dc identities") {
  const ToyCorpus& corpus = testing::tiny_corpus();
  const WitnessNet w = WitnessNet::build("mlp-s", corpus.side, corpus.num_classes, 4);
  std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5};
  const Array x = rows_of(corpus.train.images, rows);
  std::vector<int> y;
  for (auto r : rows) y.push_back(corpus.train.labels[r]);
  CHECK(std::abs(loss_dc(Var(x), y, x, y, w).item()) <= 1e-10);

  // A zero-initialised two-class witness predicts (0.5, 0.5), so flipping every
  // label negates every gradient.
  const WitnessNet z = scalar_logistic(0, 0, 0, 0);
  const Array xs = Array::matrix(3, 1, {0.3, -1.2, 2.0});
  const std::vector<int> ys{0, 1, 1}, flipped{1, 0, 0};
  CHECK(std::abs(loss_dc(Var(xs), flipped, xs, ys, z).item() - 2.0) <= 1e-10);

  // Zero-norm gradient: a witness whose gradient vanishes on a batch.
  CHECK_THROWS_AS(loss_dc(Var(Array::matrix(1, 1, {0.0})), std::vector<int>{0}, xs, ys,
                          scalar_logistic(0, 0, 500, -500)),
                  DegenerateInputError);
}

TEST_CASE("loss_dc on a logistic witness matches hand-computed gradients") {
  const std::vector<double> th{0.4, -0.7, 0.1, 0.25};
  const WitnessNet w = scalar_logistic(th[0], th[1], th[2], th[3]);
  const std::vector<double> xr{0.5, -1.0, 1.5, 0.2}, xs{0.9, -0.4};
  const std::vector<int> yr{0, 1, 1, 0}, ys{1, 0};
  const double expect = cosine_distance_ref(logistic_grad(th, xs, ys), logistic_grad(th, xr, yr));
  const Var got = loss_dc(Var(Array::matrix(2, 1, xs)), ys, Array::matrix(4, 1, xr), yr, w);
  CHECK(got.item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("loss_dm") {
  const Var sf(Array::matrix(1, 2, {0.0, 1.0}));
  const Var rf(Array::matrix(1, 2, {1.0, 0.0}));
  const std::vector<int> one{0};
  CHECK(mean_feature_discrepancy(sf, one, rf, one).item() == 2.0);
  CHECK(mean_feature_discrepancy(rf, one, rf, one).item() == 0.0);

  // Equal class means from different samples.
  const Var a(Array::matrix(2, 2, {1.0, 3.0, 3.0, 1.0}));
  const Var b(Array::matrix(1, 2, {2.0, 2.0}));
  CHECK(mean_feature_discrepancy(a, std::vector<int>{0, 0}, b, one).item() == 0.0);

  CHECK_THROWS_AS(mean_feature_discrepancy(sf, one, rf, std::vector<int>{1}), ContractError);

  // Brute force over 3 classes with a linear feature net.
  const ToyCorpus& corpus = testing::tiny_corpus();
  const WitnessNet net = WitnessNet::build("linear", corpus.side, corpus.num_classes, 8);
  Rng rng(2);
  const Array syn = rng.normal_array(Shape{6, corpus.image_dim()});
  const std::vector<int> sl{0, 0, 1, 1, 2, 2};
  std::vector<std::size_t> rows(corpus.train.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const Array real = corpus.train.images;
  const std::vector<int>& rl = corpus.train.labels;
  const Var got = loss_dm(Var(syn), sl, real, rl, net);

  ad::NoGrad ng;
  const Array fs = net.features(Var(syn)).value();
  const Array fr = net.features(Var(real)).value();
  double expect = 0.0;
  for (int k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < fs.cols(); ++j) {
      double ms = 0.0, mr = 0.0;
      std::size_t ns = 0, nr = 0;
      for (std::size_t i = 0; i < sl.size(); ++i) {
        if (sl[i] == k) {
          ms += fs.at(i, j);
          ++ns;
        }
      }
      for (std::size_t i = 0; i < rl.size(); ++i) {
        if (rl[i] == k) {
          mr += fr.at(i, j);
          ++nr;
        }
      }
      const double d = mr / static_cast<double>(nr) - ms / static_cast<double>(ns);
      expect += d * d;
    }
  }
  CHECK(got.item() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(got.item() >= 0.0);
}

TEST_CASE("loss_mtt") {
  const std::vector<double> t0{0.4, -0.7, 0.1, 0.25}, t2{0.1, -0.2, 0.3, -0.1};
  auto snap = [](const std::vector<double>& t) {
    return std::vector<Array>{Array::matrix(2, 1, {t[0], t[1]}), Array::vector({t[2], t[3]})};
  };
  ExpertBuffer buf;
  buf.arch = "logistic";
  buf.side = 1;
  buf.num_classes = 2;
  buf.trajectories = {{snap(t0), snap({0.2, -0.5, 0.2, 0.1}), snap(t2)}};
  const std::vector<double> xs{0.9, -0.4, 1.3};
  const std::vector<int> ys{1, 0, 1};
  Var s(Array::matrix(3, 1, xs), true);
  const double lr = 0.3;

  CHECK(loss_mtt(s, ys, buf, 0, 0, 0, 2, lr).item() == 1.0);

  const auto g = logistic_grad(t0, xs, ys);
  double num = 0.0, den = 0.0;
  std::vector<double> t1(4);
  for (int i = 0; i < 4; ++i) {
    t1[i] = t0[i] - lr * g[i];
    num += (t1[i] - t2[i]) * (t1[i] - t2[i]);
    den += (t0[i] - t2[i]) * (t0[i] - t2[i]);
  }
  const Var one = loss_mtt(s, ys, buf, 0, 0, 1, 2, lr);
  CHECK(one.item() == doctest::Approx(num / den).epsilon(1e-12));
  CHECK(one.item() >= 0.0);
  auto gs = ad::grad(one, std::vector<Var>{s});
  CHECK(gs[0].value().norm() > 0.0);

  // Reaching the target exactly gives 0.
  ExpertBuffer hit = buf;
  hit.trajectories[0][2] = snap(t1);
  CHECK(loss_mtt(s, ys, hit, 0, 0, 1, 2, lr).item() <= 1e-24);

  ExpertBuffer flat = buf;
  flat.trajectories[0][2] = snap(t0);
  CHECK_THROWS_AS(loss_mtt(s, ys, flat, 0, 0, 1, 2, lr), DegenerateInputError);
  CHECK_THROWS_AS(loss_mtt(s, ys, buf, 0, 1, 1, 2, lr), ContractError);
  CHECK_THROWS_AS(loss_mtt(s, ys, buf, 1, 0, 1, 2, lr), ContractError);
}

TEST_CASE("expert trajectories") {
  const ToyCorpus& corpus = testing::tiny_corpus();
  const ExpertSpec spec = tiny_experts();
  const ExpertBuffer a = train_experts(corpus, spec, 3);
  const ExpertBuffer b = train_experts(corpus, spec, 3);
  REQUIRE(a.num_experts() == 2);
  REQUIRE(a.num_snapshots() == spec.epochs + 1);
  const WitnessNet init = WitnessNet::build(spec.arch, corpus.side, corpus.num_classes, derive_seed(3, 0));
  for (std::size_t i = 0; i < init.params().size(); ++i) CHECK(same(a.trajectories[0][0][i], init.params()[i].value()));
  for (std::size_t e = 0; e < 2; ++e) {
    for (std::size_t k = 0; k < a.num_snapshots(); ++k) {
      for (std::size_t i = 0; i < a.trajectories[e][k].size(); ++i) {
        CHECK(same(a.trajectories[e][k][i], b.trajectories[e][k][i]));
      }
    }
  }
}

TEST_CASE("init_distilled") {
  const ToyCorpus& corpus = testing::tiny_corpus();
  const ModelBundle& bundle = testing::tiny_bundle();

  const DistilledSet ds = init_distilled(corpus, bundle, 2, 9);
  CHECK(ds.size() == 6);
  CHECK(ds.labels == std::vector<int>{0, 0, 1, 1, 2, 2});
  CHECK(ds.Z.requires_grad());
  CHECK(ds.c.requires_grad());
  REQUIRE(ds.source_indices.size() == 6);
  CHECK(std::set<std::size_t>(ds.source_indices.begin(), ds.source_indices.end()).size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(corpus.train.labels[ds.source_indices[i]] == ds.labels[i]);
  {
    // Decoding the initial codes is the autoencoder reconstruction of the sources.
    ad::NoGrad ng;
    const Array src = rows_of(corpus.train.images, ds.source_indices);
    const Array dec = bundle.ae.decode(ds.Z).value();
    const Array rec = bundle.ae.decode(bundle.ae.encode(Var(src))).value();
    CHECK(same(dec, rec));
    CHECK(ad::mse(Var(dec), Var(src)).item() == doctest::Approx(reconstruction_mse(bundle.ae, src)).epsilon(1e-12));
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < bundle.d_embed(); ++j) {
        CHECK(ds.c.value().at(i, j) == bundle.embedder.table.value().at(static_cast<std::size_t>(ds.labels[i]), j));
      }
    }
  }

  const DistilledSet g1 = init_distilled(corpus, bundle, 1, 4, InitSource::gaussian);
  const DistilledSet g2 = init_distilled(corpus, bundle, 1, 4, InitSource::gaussian);
  CHECK(same(g1.Z.value(), g2.Z.value()));
  CHECK(same(g1.c.value(), g2.c.value()));
  CHECK(g1.source_indices.empty());

  // Per-class selection is uniform without replacement: with 12 images per
  // class and ipc = 1, two seeds pick the same image with probability 1/12.
  std::size_t hits = 0, trials = 0;
  for (std::uint64_t s = 0; s < 400; ++s) {
    const auto a = init_distilled(corpus, bundle, 1, 1000 + s).source_indices;
    const auto b = init_distilled(corpus, bundle, 1, 5000 + s).source_indices;
    for (std::size_t k = 0; k < a.size(); ++k, ++trials) hits += a[k] == b[k];
  }
  CHECK(static_cast<double>(hits) / static_cast<double>(trials) == doctest::Approx(1.0 / 12.0).epsilon(0.35));

  CHECK_THROWS_AS(init_distilled(corpus, bundle, 13, 1), ContractError);
  CHECK_THROWS_AS(init_distilled(corpus, bundle, 0, 1), ConfigError);
}

TEST_CASE("optimizer identities") {
  Var p(Array::vector({1.0, -2.0, 0.5}), true);
  const Var g(Array::vector({0.25, 1.0, -4.0}));
  Sgd plain(0.1);
  std::vector<Var> ps{p}, gs{g};
  plain.step(ps, gs);
  CHECK(p.value()[0] == 1.0 - 0.1 * 0.25);
  CHECK(p.value()[1] == -2.0 - 0.1 * 1.0);
  CHECK(p.value()[2] == 0.5 - 0.1 * -4.0);
}

TEST_CASE("distill_step and run_distillation") {
  const ToyCorpus& corpus = testing::tiny_corpus();
  const ModelBundle& bundle = testing::tiny_bundle();
  const DistilledSet init = init_distilled(corpus, bundle, 1, 2);
  const auto bundle_before = bundle.parameter_values();
  const Array table_before = bundle.embedder.table.value();

  SUBCASE("lr = 0 leaves Z and c unchanged") {
    for (Algorithm a : {Algorithm::dc, Algorithm::dm}) {
      DistillConfig cfg = tiny_config(a, DistillMode::ld3m);
      cfg.lr = 0.0;
      DistilledSet ds = init.clone();
      Sgd opt(0.0, cfg.momentum);
      const NoiseSchedule s = ScheduleFamily{}.make(cfg.T);
      for (std::size_t it = 0; it < 3; ++it) distill_step(ds, cfg, bundle, s, corpus, it, opt);
      CHECK(same(ds.Z.value(), init.Z.value()));
      CHECK(same(ds.c.value(), init.c.value()));
    }
  }

  SUBCASE("momentum 0 applies Z - lr g") {
    DistillConfig cfg = tiny_config(Algorithm::dm, DistillMode::ld3m);
    cfg.momentum = 0.0;
    const NoiseSchedule s = ScheduleFamily{}.make(cfg.T);
    DistilledSet upd = init.clone();
    Sgd opt(0.5, 0.0);
    const StepResult r = distill_step(upd, cfg, bundle, s, corpus, 0, opt);
    CHECK(r.grad_norm_Z > 0.0);
    double moved = 0.0;
    for (std::size_t i = 0; i < upd.Z.size(); ++i) moved += std::pow(upd.Z.value()[i] - init.Z.value()[i], 2);
    CHECK(std::sqrt(moved) == doctest::Approx(0.5 * r.grad_norm_Z).epsilon(1e-12));
  }

  SUBCASE("iterations = 0 returns the initialisation") {
    DistillConfig cfg = tiny_config(Algorithm::dc, DistillMode::ld3m);
    cfg.iterations = 0;
    const DistillResult r = run_distillation(cfg, corpus, bundle, ScheduleFamily{}.make(cfg.T), init.clone());
    CHECK(r.steps.empty());
    CHECK(same(r.set.Z.value(), init.Z.value()));
    CHECK(same(r.set.c.value(), init.c.value()));
  }

  SUBCASE("no_diffusion never calls the denoiser") {
    const DistillConfig cfg = tiny_config(Algorithm::dc, DistillMode::no_diffusion);
    const DistillResult r = run_distillation(cfg, corpus, bundle, ScheduleFamily{}.make(cfg.T), init.clone());
    CHECK(r.denoiser_calls == 0);
    // Checkpointed segments run the denoiser again on backward.
    DistillConfig ld = tiny_config(Algorithm::dc, DistillMode::ld3m);
    CHECK(run_distillation(ld, corpus, bundle, ScheduleFamily{}.make(ld.T), init.clone()).denoiser_calls ==
          2 * ld.iterations * ld.T);
    ld.checkpoint = false;
    CHECK(run_distillation(ld, corpus, bundle, ScheduleFamily{}.make(ld.T), init.clone()).denoiser_calls ==
          ld.iterations * ld.T);
  }

  SUBCASE("deterministic, and only Z and c change") {
    for (Algorithm a : {Algorithm::dc, Algorithm::dm, Algorithm::mtt}) {
      CAPTURE(to_string(a));
      DistillConfig cfg = tiny_config(a, DistillMode::ld3m);
      cfg.mtt.max_start_epoch = 2;
      const ExpertBuffer experts = train_experts(corpus, tiny_experts(), 5);
      const NoiseSchedule s = ScheduleFamily{}.make(cfg.T);
      const DistillResult r1 = run_distillation(cfg, corpus, bundle, s, init.clone(), &experts);
      const DistillResult r2 = run_distillation(cfg, corpus, bundle, s, init.clone(), &experts);
      CHECK(same(r1.set.Z.value(), r2.set.Z.value()));
      CHECK(same(r1.set.c.value(), r2.set.c.value()));
      CHECK_FALSE(same(r1.set.Z.value(), init.Z.value()));
      for (const auto& st : r1.steps) {
        CHECK(std::isfinite(st.loss));
        CHECK(st.loss >= 0.0);
      }
      REQUIRE(r1.wall_ms.size() == cfg.iterations);
    }
    const auto after = bundle.parameter_values();
    for (std::size_t i = 0; i < after.size(); ++i) CHECK(same(after[i], bundle_before[i]));
    CHECK(same(bundle.embedder.table.value(), table_before));
  }

  SUBCASE("gates") {
    DistillConfig cfg = tiny_config(Algorithm::dc, DistillMode::ld3m);
    cfg.recon_gate = bundle.recon_mse / 2.0;
    CHECK_THROWS_AS(run_distillation(cfg, corpus, bundle, ScheduleFamily{}.make(cfg.T), init.clone()), GateError);
    DistillConfig mtt = tiny_config(Algorithm::mtt, DistillMode::ld3m);
    CHECK_THROWS_AS(run_distillation(mtt, corpus, bundle, ScheduleFamily{}.make(mtt.T), init.clone()), GateError);
    ModelBundle open = bundle;
    open.frozen = false;
    DistillConfig ok = tiny_config(Algorithm::dc, DistillMode::ld3m);
    CHECK_THROWS_AS(run_distillation(ok, corpus, open, ScheduleFamily{}.make(ok.T), init.clone()), GateError);
    CHECK_THROWS_AS(run_distillation(ok, corpus, bundle, ScheduleFamily{}.make(ok.T + 1), init.clone()),
                    ContractError);
  }
}

TEST_CASE("DC loss decreases over 50 iterations (median over 5 seeds)") {
  const ToyCorpus& corpus = testing::tiny_corpus();
  const ModelBundle& bundle = testing::tiny_bundle();
  std::vector<double> drops;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    DistillConfig cfg = tiny_config(Algorithm::dc, DistillMode::ld3m);
    cfg.iterations = 50;
    cfg.seed = seed;
    const DistillResult r =
        run_distillation(cfg, corpus, bundle, ScheduleFamily{}.make(cfg.T), init_distilled(corpus, bundle, 1, seed));
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
      first += r.steps[i].loss;
      last += r.steps[40 + i].loss;
    }
    drops.push_back(first - last);
  }
  std::sort(drops.begin(), drops.end());
  CHECK(drops[2] > 0.0);
}
