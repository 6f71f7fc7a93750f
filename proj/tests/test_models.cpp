// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "ld3m/errors.hpp"
#include "ld3m/models.hpp"
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

void put_be32(std::ofstream& o, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  o.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

TEST_CASE("toy corpus") {
  const CorpusSpec spec = testing::tiny_corpus_spec();
  const ToyCorpus a = generate_toy_corpus(spec, 3);
  const ToyCorpus b = generate_toy_corpus(spec, 3);
  CHECK(same(a.train.images, b.train.images));
  CHECK(same(a.test.images, b.test.images));
  CHECK(a.train.labels == b.train.labels);
  CHECK(a.train.size() == spec.num_classes * spec.per_class);
  CHECK(a.test.size() == spec.num_classes * spec.test_per_class);
  for (double v : a.train.images.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_FALSE(same(a.train.images, generate_toy_corpus(spec, 4).train.images));

  CorpusSpec clean = spec;
  clean.noise_level = 0.0;
  const ToyCorpus c = generate_toy_corpus(clean, 9);
  const std::size_t D = c.image_dim();
  for (std::size_t k = 0; k < clean.num_classes; ++k) {
    const Array p = render_pattern(k, clean.side);
    for (std::size_t r : c.train.indices_of(static_cast<int>(k))) {
      for (std::size_t i = 0; i < D; ++i) REQUIRE(c.train.images.at(r, i) == p[i]);
    }
  }

  CorpusSpec bad = spec;
  bad.num_classes = 1;
  CHECK_THROWS_AS(generate_toy_corpus(bad, 1), ConfigError);
  bad.num_classes = 17;
  CHECK_THROWS_AS(generate_toy_corpus(bad, 1), ConfigError);
}

TEST_CASE("default corpus is learnable by a depth-2 MLP in 200 steps") {
  const ToyCorpus corpus = generate_toy_corpus(CorpusSpec{}, 1);
  WitnessNet net = WitnessNet::build("mlp-s", corpus.side, corpus.num_classes, 2);
  ClassifierTraining ct;
  ct.steps = 200;
  Rng rng(3);
  train_classifier(net, corpus.train.images, corpus.train.labels, ct, rng);
  CHECK(accuracy(net, corpus.test.images, corpus.test.labels) >= 0.95);
}

TEST_CASE("IDX ingestion") {
  const auto dir = std::filesystem::temp_directory_path() / "ld3m_idx_test";
  std::filesystem::create_directories(dir);
  const std::size_t N = 6, H = 16, W = 16;
  {
    std::ofstream im(dir / "img.idx", std::ios::binary), lb(dir / "lab.idx", std::ios::binary);
    put_be32(im, 0x00000803);
    put_be32(im, N);
    put_be32(im, H);
    put_be32(im, W);
    put_be32(lb, 0x00000801);
    put_be32(lb, N);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t i = 0; i < H * W; ++i) im.put(static_cast<char>(n % 2 ? 255 : 0));
      lb.put(static_cast<char>(n % 2));
    }
  }
  CorpusSpec spec;
  spec.num_classes = 2;
  spec.per_class = 2;
  spec.test_per_class = 1;
  spec.side = 8;
  const ToyCorpus c = load_idx_corpus((dir / "img.idx").string(), (dir / "lab.idx").string(), spec);
  CHECK(c.train.size() == 4);
  CHECK(c.test.size() == 2);
  for (std::size_t r = 0; r < c.train.size(); ++r) {
    const double expect = c.train.labels[r] == 1 ? 1.0 : 0.0;
    for (std::size_t i = 0; i < c.image_dim(); ++i) REQUIRE(c.train.images.at(r, i) == expect);
  }

  {
    std::ofstream t(dir / "trunc.idx", std::ios::binary);
    put_be32(t, 0x00000803);
    put_be32(t, N);
    put_be32(t, H);
    put_be32(t, W);
    t.put(0);
  }
  CHECK_THROWS_AS(read_idx((dir / "trunc.idx").string()), CorruptFileError);
  CHECK_THROWS_AS(read_idx((dir / "missing.idx").string()), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("autoencoder") {
  const ToyCorpus& corpus = testing::tiny_corpus();

  SUBCASE("linear full-width autoencoder is identity-capable") {
    // More training images than pixels, so the train split spans the image space.
    CorpusSpec cs = testing::tiny_corpus_spec();
    cs.per_class = 50;
    const ToyCorpus wide = generate_toy_corpus(cs, 2);
    AutoencoderSpec s;
    s.d_latent = wide.image_dim();
    s.hidden = {};
    s.epochs = 2000;
    s.lr = 2e-3;
    s.batch = 16;
    CHECK(pretrain_autoencoder(wide, s, 1).recon_mse <= 1e-4);
  }

  SUBCASE("epochs = 0 keeps the initialization") {
    AutoencoderSpec s = testing::tiny_bundle_spec().autoencoder;
    s.epochs = 0;
    const AutoencoderResult a = pretrain_autoencoder(corpus, s, 7);
    const AutoencoderResult b = pretrain_autoencoder(corpus, s, 7);
    CHECK(a.recon_mse == reconstruction_mse(a.ae, corpus.test.images));
    CHECK(a.recon_mse == b.recon_mse);
    for (std::size_t i = 0; i < a.ae.encoder.parameters().size(); ++i) {
      CHECK(same(a.ae.encoder.parameters()[i].value(), b.ae.encoder.parameters()[i].value()));
    }
  }

  SUBCASE("latents have the configured scale") {
    const auto& b = testing::tiny_bundle();
    ad::NoGrad ng;
    const Array z = b.ae.encode(Var(corpus.train.images)).value();
    double m = 0.0, v = 0.0;
    for (double x : z.data()) m += x;
    m /= static_cast<double>(z.size());
    for (double x : z.data()) v += (x - m) * (x - m);
    v /= static_cast<double>(z.size());
    CHECK(std::sqrt(v) == doctest::Approx(testing::tiny_bundle_spec().autoencoder.latent_std).epsilon(1e-9));
  }

  AutoencoderSpec bad;
  bad.d_latent = corpus.image_dim() + 1;
  CHECK_THROWS_AS(pretrain_autoencoder(corpus, bad, 1), ConfigError);
}

TEST_CASE("denoiser") {
  const ToyCorpus& corpus = testing::tiny_corpus();
  const auto& b = testing::tiny_bundle();
  const ScheduleFamily fam;
  const double d = static_cast<double>(b.d_latent());

  SUBCASE("beats the zero predictor") {
    const NoiseSchedule s = fam.make(10);
    double avg = 0.0;
    for (std::size_t t = 1; t <= 10; ++t) avg += denoising_mse(b.denoiser, b.embedder, b.ae, corpus.test, s, t, 4);
    CHECK(avg / 10.0 < d);
    CHECK(denoising_mse(b.denoiser, b.embedder, b.ae, corpus.test, s, 10, 4) < d);
  }

  SUBCASE("untrained network on nearly pure noise scores about d_latent") {
    DenoiserSpec s = testing::tiny_bundle_spec().denoiser;
    s.steps = 0;
    const DenoiserResult r = pretrain_denoiser(b.ae, corpus, fam, s, 3);
    const NoiseSchedule noisy = make_linear_schedule(1, 0.999, 0.999, SigmaPolicy::zero);
    Split big = corpus.train;
    const double m = denoising_mse(r.denoiser, r.embedder, b.ae, big, noisy, 1, 5);
    CHECK(m == doctest::Approx(d).epsilon(0.3));
  }

  SUBCASE("same seed gives bit-identical parameters") {
    const ModelBundle again = pretrain_bundle(corpus, fam, testing::tiny_bundle_spec(), 5);
    const auto p1 = b.parameter_values(), p2 = again.parameter_values();
    REQUIRE(p1.size() == p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(same(p1[i], p2[i]));
  }

  SUBCASE("frozen bundle") {
    CHECK(b.frozen);
    for (const auto& p : b.denoiser.net().parameters()) CHECK_FALSE(p.requires_grad());
    for (const auto& p : b.ae.encoder.parameters()) CHECK_FALSE(p.requires_grad());
    CHECK_FALSE(b.embedder.table.requires_grad());
  }
}

TEST_CASE("embed_class") {
  const auto& b = testing::tiny_bundle();
  const Array& table = b.embedder.table.value();
  const std::size_t e = b.d_embed();
  Var r1 = embed_class(b.embedder, 1);
  for (std::size_t i = 0; i < e; ++i) CHECK(r1.value()[i] == table.at(1, i));

  const std::vector<double> onehot{0.0, 0.0, 1.0};
  Var r2 = embed_class(b.embedder, onehot);
  for (std::size_t i = 0; i < e; ++i) CHECK(r2.value()[i] == doctest::Approx(table.at(2, i)).epsilon(1e-15));

  const std::vector<double> half{0.5, 0.5, 0.0};
  Var mid = embed_class(b.embedder, half);
  for (std::size_t i = 0; i < e; ++i) {
    CHECK(mid.value()[i] == doctest::Approx(0.5 * (table.at(0, i) + table.at(1, i))).epsilon(1e-15));
  }

  CHECK(r1.requires_grad());
  ad::backward(ad::sum(r1));
  CHECK(r1.grad().has_value());
  CHECK_FALSE(b.embedder.table.grad().has_value());

  CHECK_THROWS_AS(embed_class(b.embedder, 3), DomainError);
  CHECK_THROWS_AS(embed_class(b.embedder, -1), DomainError);
  const std::vector<double> wrong_len{1.0, 0.0};
  CHECK_THROWS_AS(embed_class(b.embedder, wrong_len), DimensionError);
}

TEST_CASE("witness networks") {
  const ToyCorpus& corpus = testing::tiny_corpus();
  for (const auto& arch : witness_archs()) {
    CAPTURE(arch);
    const WitnessNet a = WitnessNet::build(arch, corpus.side, corpus.num_classes, 12);
    const WitnessNet b = WitnessNet::build(arch, corpus.side, corpus.num_classes, 12);
    REQUIRE(a.params().size() == b.params().size());
    for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(same(a.params()[i].value(), b.params()[i].value()));
    ad::NoGrad ng;
    const Array logits = a.logits(Var(corpus.test.images)).value();
    CHECK(logits.shape() == Shape{corpus.test.size(), corpus.num_classes});
    for (double v : logits.data()) CHECK(std::isfinite(v));
  }
  CHECK(WitnessNet::build("mlp-s", 8, 3, 1).num_layers() == 3);
  CHECK(WitnessNet::build("mlp-d", 8, 3, 1).num_layers() == 5);
  CHECK_THROWS_AS(WitnessNet::build("resnet", 8, 3, 1), ConfigError);
}
