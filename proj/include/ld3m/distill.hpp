// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ld3m/diffusion.hpp"
#include "ld3m/models.hpp"

namespace ld3m {

enum class Algorithm { dc, dm, mtt };
enum class DistillMode { standard, ld3m, no_diffusion };
enum class InitSource { real_images, gaussian };

Algorithm parse_algorithm(const std::string& s);
std::string to_string(Algorithm a);
DistillMode parse_distill_mode(const std::string& s);
std::string to_string(DistillMode m);
InitSource parse_init_source(const std::string& s);
std::string to_string(InitSource s);

// Z and c are the only trainable state; one row per synthetic sample.
struct DistilledSet {
  Var Z;  // M x d_latent
  Var c;  // M x d_embed
  std::vector<int> labels;
  std::size_t ipc = 0;
  std::size_t num_classes = 0;
  std::vector<std::size_t> source_indices;  // train rows used by a real-image init

  std::size_t size() const { return labels.size(); }
  DistilledSet clone() const;
};

DistilledSet init_distilled(const ToyCorpus& corpus, const ModelBundle& bundle, std::size_t ipc, std::uint64_t seed,
                            InitSource source = InitSource::real_images);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Layerwise gradient matching: mean over layers of the cosine distance between
/// the witness's cross-entropy gradients on the synthetic and real batches.
Var loss_dc(const Var& s_images, std::span<const int> s_labels, const Array& real_images,
            std::span<const int> real_labels, const WitnessNet& witness);

/// Sum over classes of ||mean psi(real_c) - mean psi(syn_c)||^2.
Var loss_dm(const Var& s_images, std::span<const int> s_labels, const Array& real_images,
            std::span<const int> real_labels, const WitnessNet& feature_net);

// The class-mean discrepancy on precomputed features.
Var mean_feature_discrepancy(const Var& s_features, std::span<const int> s_labels, const Var& real_features,
                             std::span<const int> real_labels);

struct ExpertSpec {
  std::string arch = "mlp-s";
  std::size_t num_experts = 5;
  std::size_t epochs = 8;
  double lr = 0.05;
  std::size_t batch = 64;
};

struct ExpertBuffer {
  std::string arch;
  std::size_t side = 0;
  std::size_t num_classes = 0;
  // trajectories[e][k] holds the parameters after k epochs of expert e.
  std::vector<std::vector<std::vector<Array>>> trajectories;

  std::size_t num_experts() const { return trajectories.size(); }
  std::size_t num_snapshots() const { return trajectories.empty() ? 0 : trajectories.front().size(); }
};

ExpertBuffer train_experts(const ToyCorpus& corpus, const ExpertSpec& spec, std::uint64_t seed);

struct MttSpec {
  std::size_t n_syn = 10;
  std::size_t m_expert = 2;
  std::size_t max_start_epoch = 3;
  double inner_lr = 0.05;
};

/// ||theta_hat_N - theta*_{t+M}||^2 / ||theta*_t - theta*_{t+M}||^2 where
/// theta_hat takes N differentiable SGD steps on the synthetic batch from theta*_t.
Var loss_mtt(const Var& s_images, std::span<const int> s_labels, const ExpertBuffer& buffer, std::size_t expert,
             std::size_t start_epoch, std::size_t n_syn, std::size_t m_expert, double inner_lr);

// ---------------------------------------------------------------------------
// Outer loop
// ---------------------------------------------------------------------------

struct DistillConfig {
  Algorithm algorithm = Algorithm::dc;
  double lr = -1.0;  // negative: per-algorithm default
  double momentum = 0.5;
  std::size_t iterations = 500;
  DistillMode mode = DistillMode::ld3m;
  std::size_t T = 10;
  std::size_t batch_real = 256;
  std::size_t ipc = 1;
  InitSource init = InitSource::real_images;
  std::string witness_arch = "mlp-s";
  bool freeze_noise = false;
  bool checkpoint = true;
  bool augment = false;  // random horizontal flip of both batches
  double recon_gate = 0.02;
  MttSpec mtt;
  std::uint64_t seed = 0;

  double effective_lr() const;
};

double default_lr(Algorithm a);

struct StepResult {
  double loss = 0.0;
  double grad_norm_Z = 0.0;
  double grad_norm_c = 0.0;
};

/// Synthetic images for a set: D(z_0) after the chain, or D(Z) for no_diffusion.
Var synthesize(const DistilledSet& ds, const ModelBundle& bundle, const NoiseSchedule& schedule, DistillMode mode,
               const Rng& rng, bool checkpoint = true);

// Clamped to [0, 1], no graph.
Array synthesize_images(const DistilledSet& ds, const ModelBundle& bundle, const NoiseSchedule& schedule,
                        DistillMode mode, std::uint64_t seed);

/// One outer iteration: images through the frozen stack, the configured loss
/// with a freshly seeded witness, one momentum-SGD update of Z and c.
StepResult distill_step(DistilledSet& ds, const DistillConfig& cfg, const ModelBundle& bundle,
                        const NoiseSchedule& schedule, const ToyCorpus& corpus, std::size_t iter, Sgd& optimizer,
                        const ExpertBuffer* experts = nullptr);

struct DistillResult {
  DistilledSet set;
  std::vector<StepResult> steps;
  std::vector<double> wall_ms;
  std::size_t denoiser_calls = 0;
};

using IterationCallback = std::function<void(std::size_t iter, const StepResult&)>;

DistillResult run_distillation(const DistillConfig& cfg, const ToyCorpus& corpus, const ModelBundle& bundle,
                               const NoiseSchedule& schedule, DistilledSet init,
                               const ExpertBuffer* experts = nullptr, const IterationCallback& on_iter = {});

}  // namespace ld3m
