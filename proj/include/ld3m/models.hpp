// SPDX-License-Identifier: Apache-2.0
#pragma once

// The frozen generative stack (autoencoder, noise-prediction denoiser, class
// embedder), the toy corpus it is trained on, and the small witness networks
// the distillation losses and the evaluation protocol train.

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ld3m/nn.hpp"
#include "ld3m/schedule.hpp"

namespace ld3m {

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

struct Split {
  Array images;  // N x side*side, values in [0, 1]
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::vector<std::size_t> indices_of(int label) const;
};

struct ToyCorpus {
  Split train;
  Split test;
  std::size_t num_classes = 0;
  std::size_t side = 0;

  std::size_t image_dim() const { return side * side; }
};

struct CorpusSpec {
  std::size_t num_classes = 4;
  std::size_t per_class = 100;       // training images per class
  std::size_t test_per_class = 50;
  std::size_t side = 12;
  double noise_level = 0.2;
};

/// Procedural class patterns with nuisance variation scaled by noise_level:
/// pixel noise of sd noise_level/2, contrast jitter, and a circular shift of up
/// to round(noise_level * side / 2) pixels.
/// noise_level = 0 renders every image of a class identically.
ToyCorpus generate_toy_corpus(const CorpusSpec& spec, std::uint64_t seed);

// Clean (noise-free) rendering of one class pattern.
Array render_pattern(std::size_t cls, std::size_t side);

struct IdxArray {
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> data;
};

// Big-endian IDX (magic 0x00000803 images, 0x00000801 labels).
IdxArray read_idx(const std::string& path);

/// Builds a corpus from IDX image/label files, box-downsampled to side x side.
/// Takes the first per_class (then test_per_class) images of each of the
/// first num_classes labels.
ToyCorpus load_idx_corpus(const std::string& images_path, const std::string& labels_path,
                          const CorpusSpec& spec);

// ---------------------------------------------------------------------------
// Generative stack
// ---------------------------------------------------------------------------

struct Autoencoder {
  Mlp encoder;
  Mlp decoder;
  // Encoder outputs are divided by this (see AutoencoderSpec::latent_std).
  double latent_scale = 1.0;

  Var encode(const Var& x) const;
  Var decode(const Var& z) const;
};

struct AutoencoderSpec {
  std::size_t d_latent = 16;
  std::vector<std::size_t> hidden = {128};  // empty: linear encoder/decoder
  std::size_t epochs = 150;
  double lr = 2e-3;
  std::size_t batch = 32;
  // Encoder outputs are rescaled to this standard deviation on the train split.
  double latent_std = 0.25;
};

struct AutoencoderResult {
  Autoencoder ae;
  double recon_mse = 0.0;  // test split
};

AutoencoderResult pretrain_autoencoder(const ToyCorpus& corpus, const AutoencoderSpec& spec, std::uint64_t seed);

double reconstruction_mse(const Autoencoder& ae, const Array& images);

constexpr std::size_t kGammaEmbedDim = 16;

// Sinusoidal embedding of the cumulative noise level.
std::vector<double> embed_gamma(double gamma);

struct ClassEmbedder {
  Var table;  // num_classes x d_embed

  std::size_t num_classes() const { return table.shape()[0]; }
  std::size_t dim() const { return table.shape()[1]; }
};

// Rows orthonormal when num_classes <= dim, columns orthonormal otherwise.
ClassEmbedder make_class_embedder(std::size_t num_classes, std::size_t dim, Rng& rng);

/// Returns a fresh trainable copy of the class code; the table is never a parent.
Var embed_class(const ClassEmbedder& embedder, int label);
Var embed_class(const ClassEmbedder& embedder, std::span<const double> weights);

/// Noise-prediction network f(c, z_t, gamma_t); inputs concatenated as
/// [z_t, c, embed(gamma_t)].
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(std::size_t d_latent, std::size_t d_embed, std::vector<std::size_t> hidden, Rng& rng);

  // gamma holds one value per row of z.
  Var predict(const Var& z, const Var& c, std::span<const double> gamma) const;
  Var predict(const Var& z, const Var& c, double gamma) const;

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  std::size_t d_latent() const { return d_latent_; }
  std::size_t d_embed() const { return d_embed_; }

  std::size_t calls() const { return calls_->load(); }
  void reset_calls() const { calls_->store(0); }

 private:
  Mlp net_;
  std::size_t d_latent_ = 0;
  std::size_t d_embed_ = 0;
  std::shared_ptr<std::atomic<std::size_t>> calls_ = std::make_shared<std::atomic<std::size_t>>(0);
};

struct DenoiserSpec {
  std::size_t d_embed = 8;
  std::vector<std::size_t> hidden = {128, 128};
  std::size_t steps = 6000;
  double lr = 1e-3;
  std::size_t batch = 64;
  // Noise levels are drawn from schedules with T uniform in [1, max_T].
  std::size_t max_T = 100;
};

struct DenoiserResult {
  Denoiser denoiser;
  ClassEmbedder embedder;
  double train_loss = 0.0;  // mean per-sample ||eps - f||^2 over the last steps
};

/// Trains f and the class embedder jointly on E(x) latents:
/// minimises ||eps - f(c, sqrt(g) z + sqrt(1-g) eps, g)||^2.
DenoiserResult pretrain_denoiser(const Autoencoder& ae, const ToyCorpus& corpus, const ScheduleFamily& family,
                                 const DenoiserSpec& spec, std::uint64_t seed);

// Per-sample ||eps - f||^2 averaged over a batch at a fixed step of `schedule`.
double denoising_mse(const Denoiser& f, const ClassEmbedder& embedder, const Autoencoder& ae,
                     const Split& data, const NoiseSchedule& schedule, std::size_t t, std::uint64_t seed);

struct ModelBundle {
  Autoencoder ae;
  Denoiser denoiser;
  ClassEmbedder embedder;
  std::size_t num_classes = 0;
  std::size_t side = 0;
  double recon_mse = 0.0;
  bool frozen = false;

  std::size_t d_latent() const { return ae.encoder.out_dim(); }
  std::size_t d_embed() const { return embedder.dim(); }
  std::size_t image_dim() const { return side * side; }

  void freeze();
  std::vector<Array> parameter_values() const;
};

struct BundleSpec {
  AutoencoderSpec autoencoder;
  DenoiserSpec denoiser;
};

ModelBundle pretrain_bundle(const ToyCorpus& corpus, const ScheduleFamily& family, const BundleSpec& spec,
                            std::uint64_t seed);

// ---------------------------------------------------------------------------
// Witness networks
// ---------------------------------------------------------------------------

/// Small classifier over flattened images. "mlp-s" (2 hidden x 64),
/// "mlp-m" (2 hidden x 128), "mlp-d" (4 hidden x 64), "mixer-s" (per-patch
/// MLP, transpose, cross-patch MLP, linear head). "logistic" and "linear" are
/// one- and two-layer nets without nonlinearity, used as analytic fixtures.
class WitnessNet {
 public:
  static WitnessNet build(const std::string& arch, std::size_t side, std::size_t num_classes,
                          std::uint64_t seed);

  const std::string& arch() const { return arch_; }
  std::vector<Var>& params() { return params_; }
  const std::vector<Var>& params() const { return params_; }
  std::size_t num_layers() const { return params_.size() / 2; }
  std::size_t num_classes() const { return classes_; }

  Var logits(const Var& x) const { return logits_with(params_, x); }
  Var logits_with(std::span<const Var> params, const Var& x) const;
  // Penultimate activations (the representation fed to the final layer).
  Var features_with(std::span<const Var> params, const Var& x) const;
  Var features(const Var& x) const { return features_with(params_, x); }

 private:
  Var mixer_trunk(std::span<const Var> params, const Var& x) const;

  std::string arch_;
  std::size_t side_ = 0;
  std::size_t classes_ = 0;
  Mlp mlp_;
  std::vector<Var> params_;
  // mixer-s layout
  std::size_t patch_ = 0;
  std::size_t tokens_ = 0;
  std::size_t channels_ = 0;
  std::vector<std::size_t> patch_order_;
  std::vector<std::size_t> channel_major_;
};

const std::vector<std::string>& witness_archs();

double accuracy(const WitnessNet& net, const Array& images, std::span<const int> labels);

struct ClassifierTraining {
  std::size_t steps = 300;
  double lr = 0.01;
  double momentum = 0.0;
  std::size_t batch = 64;
  bool with_replacement = true;
};

/// Plain minibatch SGD on cross-entropy. Calls on_step(step) after each update.
void train_classifier(WitnessNet& net, const Array& images, std::span<const int> labels,
                      const ClassifierTraining& cfg, Rng& rng);

Array rows_of(const Array& m, std::span<const std::size_t> idx);

}  // namespace ld3m
