// SPDX-License-Identifier: Apache-2.0
#include "ld3m/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "ld3m/errors.hpp"
#include "ld3m/ops.hpp"

namespace ld3m {

namespace {

// Substream ids under the distillation seed.
constexpr std::uint64_t kChainStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kMttStream = 3;
constexpr std::uint64_t kAugmentStream = 4;

std::vector<std::size_t> as_indices(std::span<const int> labels) {
  return std::vector<std::size_t>(labels.begin(), labels.end());
}

Array flip_permutation_cols(const Array& images, std::size_t side) {
  Array out(images.shape());
  for (std::size_t r = 0; r < images.rows(); ++r) {
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) out.at(r, y * side + x) = images.at(r, y * side + side - 1 - x);
    }
  }
  return out;
}

std::vector<std::size_t> flip_index(std::size_t side) {
  std::vector<std::size_t> idx(side * side);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) idx[y * side + x] = y * side + side - 1 - x;
  }
  return idx;
}

// Stratified real batch: up to batch/C images of every class, without replacement.
void sample_real_batch(const Split& train, std::size_t num_classes, std::size_t batch, Rng rng, Array& images,
                       std::vector<int>& labels) {
  const std::size_t per_class = std::max<std::size_t>(1, batch / num_classes);
  std::vector<std::size_t> rows;
  for (std::size_t k = 0; k < num_classes; ++k) {
    auto idx = train.indices_of(static_cast<int>(k));
    if (idx.empty()) throw ContractError("real batch: class " + std::to_string(k) + " has no training images");
    Rng r = rng.split(k);
    const auto perm = r.permutation(idx.size());
    const std::size_t take = std::min(per_class, idx.size());
    for (std::size_t i = 0; i < take; ++i) rows.push_back(idx[perm[i]]);
  }
  images = rows_of(train.images, rows);
  labels.clear();
  for (auto r : rows) labels.push_back(train.labels[r]);
}

}  // namespace

Algorithm parse_algorithm(const std::string& s) {
  if (s == "dc" || s == "DC") return Algorithm::dc;
  if (s == "dm" || s == "DM") return Algorithm::dm;
  if (s == "mtt" || s == "MTT") return Algorithm::mtt;
  throw ConfigError("unknown algorithm '" + s + "' (dc|dm|mtt)");
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::dc: return "dc";
    case Algorithm::dm: return "dm";
    case Algorithm::mtt: return "mtt";
  }
  return "?";
}

DistillMode parse_distill_mode(const std::string& s) {
  if (s == "standard") return DistillMode::standard;
  if (s == "ld3m") return DistillMode::ld3m;
  if (s == "no_diffusion") return DistillMode::no_diffusion;
  throw ConfigError("unknown mode '" + s + "' (standard|ld3m|no_diffusion)");
}

std::string to_string(DistillMode m) {
  switch (m) {
    case DistillMode::standard: return "standard";
    case DistillMode::ld3m: return "ld3m";
    case DistillMode::no_diffusion: return "no_diffusion";
  }
  return "?";
}

InitSource parse_init_source(const std::string& s) {
  if (s == "real_images") return InitSource::real_images;
  if (s == "gaussian") return InitSource::gaussian;
  throw ConfigError("unknown init source '" + s + "' (real_images|gaussian)");
}

std::string to_string(InitSource s) { return s == InitSource::real_images ? "real_images" : "gaussian"; }

DistilledSet DistilledSet::clone() const {
  DistilledSet out = *this;
  out.Z = Var(Z.value(), Z.requires_grad());
  out.c = Var(c.value(), c.requires_grad());
  return out;
}

DistilledSet init_distilled(const ToyCorpus& corpus, const ModelBundle& bundle, std::size_t ipc, std::uint64_t seed,
                            InitSource source) {
  if (ipc == 0) throw ConfigError("ipc must be positive");
  const std::size_t C = bundle.num_classes;
  Rng rng(seed);
  DistilledSet ds;
  ds.ipc = ipc;
  ds.num_classes = C;
  for (std::size_t k = 0; k < C; ++k) {
    for (std::size_t i = 0; i < ipc; ++i) ds.labels.push_back(static_cast<int>(k));
  }
  const std::size_t M = ds.labels.size();
  ad::NoGrad ng;
  if (source == InitSource::real_images) {
    for (std::size_t k = 0; k < C; ++k) {
      const auto idx = corpus.train.indices_of(static_cast<int>(k));
      if (idx.size() < ipc) {
        throw ContractError("init: class " + std::to_string(k) + " has " + std::to_string(idx.size()) +
                            " training images, fewer than ipc=" + std::to_string(ipc));
      }
      Rng r = rng.split(k);
      const auto perm = r.permutation(idx.size());
      for (std::size_t i = 0; i < ipc; ++i) ds.source_indices.push_back(idx[perm[i]]);
    }
    ds.Z = Var(bundle.ae.encode(Var(rows_of(corpus.train.images, ds.source_indices))).value(), true);
    ds.c = Var(ad::take_rows(bundle.embedder.table, as_indices(ds.labels)).value(), true);
  } else {
    const Array enc = bundle.ae.encode(Var(corpus.train.images)).value();
    double mean = 0.0, var = 0.0;
    for (double v : enc.data()) mean += v;
    mean /= static_cast<double>(enc.size());
    for (double v : enc.data()) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(enc.size()));
    Rng rz = rng.split(100), rc = rng.split(101);
    Array Z = rz.normal_array({M, bundle.d_latent()});
    Array c = rc.normal_array({M, bundle.d_embed()});
    for (auto& v : Z.data()) v *= sd;
    for (auto& v : c.data()) v *= sd;
    ds.Z = Var(std::move(Z), true);
    ds.c = Var(std::move(c), true);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

Var loss_dc(const Var& s_images, std::span<const int> s_labels, const Array& real_images,
            std::span<const int> real_labels, const WitnessNet& witness) {
  if (s_labels.empty() || real_labels.empty()) throw ContractError("loss_dc: empty batch");
  // The witness gradients are needed even when the caller records nothing.
  ad::GradMode record(true);
  const auto& theta = witness.params();
  Var ls = ad::cross_entropy(witness.logits_with(theta, s_images), s_labels);
  auto gs = ad::grad(ls, theta, true);
  Var lt = ad::cross_entropy(witness.logits_with(theta, Var(real_images)), real_labels);
  auto gt = ad::grad(lt, theta, false);
  const std::size_t layers = theta.size() / 2;
  Var total;
  for (std::size_t l = 0; l < layers; ++l) {
    std::vector<Var> a{gs[2 * l], gs[2 * l + 1]};
    std::vector<Var> b{gt[2 * l], gt[2 * l + 1]};
    Var d = ad::cosine_distance(ad::concat_flat(a), ad::concat_flat(b));
    total = total.defined() ? ad::add(total, d) : d;
  }
  return ad::scale(total, 1.0 / static_cast<double>(layers));
}

Var mean_feature_discrepancy(const Var& s_features, std::span<const int> s_labels, const Var& real_features,
                             std::span<const int> real_labels) {
  int max_label = 0;
  for (int l : s_labels) max_label = std::max(max_label, l);
  for (int l : real_labels) max_label = std::max(max_label, l);
  Var total;
  for (int k = 0; k <= max_label; ++k) {
    std::vector<std::size_t> si, ri;
    for (std::size_t i = 0; i < s_labels.size(); ++i) {
      if (s_labels[i] == k) si.push_back(i);
    }
    for (std::size_t i = 0; i < real_labels.size(); ++i) {
      if (real_labels[i] == k) ri.push_back(i);
    }
    if (si.empty() && ri.empty()) continue;
    if (si.empty() || ri.empty()) {
      throw ContractError("loss_dm: class " + std::to_string(k) + " missing from the " +
                          (si.empty() ? "synthetic" : "real") + " batch");
    }
    Var ms = ad::scale(ad::sum_rows(ad::take_rows(s_features, si)), 1.0 / static_cast<double>(si.size()));
    Var mr = ad::scale(ad::sum_rows(ad::take_rows(real_features, ri)), 1.0 / static_cast<double>(ri.size()));
    Var diff = ad::sub(mr, ms);
    Var d = ad::dot(diff, diff);
    total = total.defined() ? ad::add(total, d) : d;
  }
  if (!total.defined()) throw ContractError("loss_dm: empty batches");
  return total;
}

Var loss_dm(const Var& s_images, std::span<const int> s_labels, const Array& real_images,
            std::span<const int> real_labels, const WitnessNet& feature_net) {
  Var fr;
  {
    ad::NoGrad ng;
    fr = feature_net.features(Var(real_images));
  }
  return mean_feature_discrepancy(feature_net.features(s_images), s_labels, fr, real_labels);
}

ExpertBuffer train_experts(const ToyCorpus& corpus, const ExpertSpec& spec, std::uint64_t seed) {
  if (spec.num_experts == 0) throw ConfigError("train_experts: need at least one expert");
  ExpertBuffer buf;
  buf.arch = spec.arch;
  buf.side = corpus.side;
  buf.num_classes = corpus.num_classes;
  const std::size_t n = corpus.train.size();
  const std::size_t batch = std::min(spec.batch, n);
  for (std::size_t e = 0; e < spec.num_experts; ++e) {
    WitnessNet net = WitnessNet::build(spec.arch, corpus.side, corpus.num_classes, derive_seed(seed, e));
    Rng rng = Rng(seed).split(1000 + e);
    Sgd opt(spec.lr);
    std::vector<std::vector<Array>> traj;
    traj.push_back(values_of(net.params()));
    for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
      const auto perm = rng.permutation(n);
      for (std::size_t start = 0; start + batch <= n; start += batch) {
        std::span<const std::size_t> idx(perm.data() + start, batch);
        std::vector<int> lab;
        for (auto i : idx) lab.push_back(corpus.train.labels[i]);
        Var loss = ad::cross_entropy(net.logits(Var(rows_of(corpus.train.images, idx))), lab);
        if (!std::isfinite(loss.item())) throw TrainingError("expert training diverged");
        auto g = ad::grad(loss, net.params());
        opt.step(net.params(), g);
      }
      traj.push_back(values_of(net.params()));
    }
    buf.trajectories.push_back(std::move(traj));
  }
  return buf;
}

namespace {

Var squared_distance(std::span<const Var> a, std::span<const Var> b) {
  Var total;
  for (std::size_t i = 0; i < a.size(); ++i) {
    Var d = ad::sub(a[i], b[i]);
    Var s = ad::dot(d, d);
    total = total.defined() ? ad::add(total, s) : s;
  }
  return total;
}

std::vector<Var> constants_of(const std::vector<Array>& values, bool requires_grad = false) {
  std::vector<Var> out;
  for (const auto& v : values) out.emplace_back(v, requires_grad);
  return out;
}

}  // namespace

Var loss_mtt(const Var& s_images, std::span<const int> s_labels, const ExpertBuffer& buffer, std::size_t expert,
             std::size_t start_epoch, std::size_t n_syn, std::size_t m_expert, double inner_lr) {
  if (expert >= buffer.num_experts()) throw ContractError("loss_mtt: expert index out of range");
  if (start_epoch + m_expert >= buffer.num_snapshots()) {
    throw ContractError("loss_mtt: start epoch + expert epochs exceeds the trajectory length");
  }
  const auto& traj = buffer.trajectories[expert];
  const WitnessNet net = WitnessNet::build(buffer.arch, buffer.side, buffer.num_classes, 0);
  const auto start = constants_of(traj[start_epoch]);
  const auto target = constants_of(traj[start_epoch + m_expert]);
  Var den = squared_distance(start, target);
  if (den.item() == 0.0) throw DegenerateInputError("loss_mtt: expert made no progress between the epochs");

  ad::GradMode record(true);
  std::vector<Var> theta = constants_of(traj[start_epoch], n_syn > 0);
  for (std::size_t k = 0; k < n_syn; ++k) {
    Var loss = ad::cross_entropy(net.logits_with(theta, s_images), s_labels);
    auto g = ad::grad(loss, theta, true);
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = ad::sub(theta[i], ad::scale(g[i], inner_lr));
  }
  return ad::div(squared_distance(theta, target), den);
}

// ---------------------------------------------------------------------------
// Outer loop
// ---------------------------------------------------------------------------

double default_lr(Algorithm a) {
  switch (a) {
    case Algorithm::dc: return 1.0;
    case Algorithm::dm: return 1e-2;
    case Algorithm::mtt: return 10.0;
  }
  return 1e-3;
}

double DistillConfig::effective_lr() const { return lr < 0.0 ? default_lr(algorithm) : lr; }

Var synthesize(const DistilledSet& ds, const ModelBundle& bundle, const NoiseSchedule& schedule, DistillMode mode,
               const Rng& rng, bool checkpoint) {
  if (mode == DistillMode::no_diffusion) return bundle.ae.decode(ds.Z);
  const ChainMode cm = mode == DistillMode::ld3m ? ChainMode::ld3m : ChainMode::standard;
  ChainOptions opts;
  opts.checkpoint = checkpoint;
  return sample_chain(ds.Z, ds.c, bundle, schedule, cm, rng, opts).decoded;
}

Array synthesize_images(const DistilledSet& ds, const ModelBundle& bundle, const NoiseSchedule& schedule,
                        DistillMode mode, std::uint64_t seed) {
  ad::NoGrad ng;
  Array out = synthesize(ds, bundle, schedule, mode, Rng(seed), false).value();
  for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

StepResult distill_step(DistilledSet& ds, const DistillConfig& cfg, const ModelBundle& bundle,
                        const NoiseSchedule& schedule, const ToyCorpus& corpus, std::size_t iter, Sgd& optimizer,
                        const ExpertBuffer* experts) {
  if (!bundle.frozen) throw ContractError("distill_step: the model bundle must be frozen");
  const Rng base(cfg.seed);
  const Rng chain_rng = cfg.freeze_noise ? base.split(kChainStream) : base.split(kChainStream).split(iter);

  Var images = synthesize(ds, bundle, schedule, cfg.mode, chain_rng, cfg.checkpoint);

  Array real;
  std::vector<int> real_labels;
  if (cfg.algorithm != Algorithm::mtt) {
    const std::size_t batch = std::min(cfg.batch_real, corpus.train.size());
    sample_real_batch(corpus.train, ds.num_classes, batch, base.split(kBatchStream).split(iter), real, real_labels);
  }
  if (cfg.augment) {
    Rng aug = base.split(kAugmentStream).split(iter);
    if (aug.uniform() < 0.5) {
      images = ad::take_cols(images, flip_index(bundle.side));
      if (real_labels.size()) real = flip_permutation_cols(real, bundle.side);
    }
  }

  Var loss;
  switch (cfg.algorithm) {
    case Algorithm::dc: {
      const WitnessNet w = WitnessNet::build(cfg.witness_arch, bundle.side, ds.num_classes, derive_seed(cfg.seed, iter));
      loss = loss_dc(images, ds.labels, real, real_labels, w);
      break;
    }
    case Algorithm::dm: {
      const WitnessNet w = WitnessNet::build(cfg.witness_arch, bundle.side, ds.num_classes, derive_seed(cfg.seed, iter));
      loss = loss_dm(images, ds.labels, real, real_labels, w);
      break;
    }
    case Algorithm::mtt: {
      if (experts == nullptr || experts->num_experts() == 0) throw GateError("MTT needs an expert buffer");
      Rng r = base.split(kMttStream).split(iter);
      const std::size_t e = r.below(experts->num_experts());
      const std::size_t start = r.below(cfg.mtt.max_start_epoch + 1);
      loss = loss_mtt(images, ds.labels, *experts, e, start, cfg.mtt.n_syn, cfg.mtt.m_expert, cfg.mtt.inner_lr);
      break;
    }
  }

  StepResult res;
  res.loss = loss.item();
  if (!std::isfinite(res.loss)) {
    throw NumericAbort("non-finite " + to_string(cfg.algorithm) + " loss at iteration " + std::to_string(iter), "");
  }
  std::vector<Var> params{ds.Z, ds.c};
  auto g = ad::grad(loss, params);
  res.grad_norm_Z = g[0].value().norm();
  res.grad_norm_c = g[1].value().norm();
  if (!std::isfinite(res.grad_norm_Z) || !std::isfinite(res.grad_norm_c)) {
    throw NumericAbort("non-finite gradient at iteration " + std::to_string(iter), "");
  }
  optimizer.step(params, g);
  return res;
}

DistillResult run_distillation(const DistillConfig& cfg, const ToyCorpus& corpus, const ModelBundle& bundle,
                               const NoiseSchedule& schedule, DistilledSet init, const ExpertBuffer* experts,
                               const IterationCallback& on_iter) {
  if (!bundle.frozen) throw GateError("the model bundle is not frozen");
  if (!(bundle.recon_mse <= cfg.recon_gate)) {
    throw GateError("autoencoder reconstruction MSE " + std::to_string(bundle.recon_mse) + " exceeds the gate " +
                    std::to_string(cfg.recon_gate));
  }
  if (cfg.algorithm == Algorithm::mtt) {
    if (experts == nullptr || experts->num_experts() == 0) throw GateError("MTT needs an expert buffer");
    if (experts->num_snapshots() < cfg.mtt.max_start_epoch + cfg.mtt.m_expert + 1) {
      throw GateError("expert trajectories are shorter than max_start_epoch + m_expert");
    }
  }
  if (cfg.mode != DistillMode::no_diffusion && schedule.T != cfg.T) {
    throw ContractError("run_distillation: schedule length differs from cfg.T");
  }
  DistillResult out;
  out.set = std::move(init);
  Sgd opt(cfg.effective_lr(), cfg.momentum);
  const std::size_t calls_before = bundle.denoiser.calls();
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    StepResult r = distill_step(out.set, cfg, bundle, schedule, corpus, it, opt, experts);
    const auto t1 = std::chrono::steady_clock::now();
    out.steps.push_back(r);
    out.wall_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    if (on_iter) on_iter(it, r);
  }
  out.denoiser_calls = bundle.denoiser.calls() - calls_before;
  return out;
}

}  // namespace ld3m
