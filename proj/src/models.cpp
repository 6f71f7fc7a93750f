// SPDX-License-Identifier: Apache-2.0
#include "ld3m/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ld3m/errors.hpp"
#include "ld3m/ops.hpp"

namespace ld3m {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double pattern_value(std::size_t cls, double x, double y, std::size_t side) {
  const double s = static_cast<double>(side);
  const double c = (s - 1.0) / 2.0;
  const auto xi = static_cast<long>(x);
  const auto yi = static_cast<long>(y);
  switch (cls) {
    case 0: return (yi % 4) < 2 ? 1.0 : 0.0;                                       // horizontal bars
    case 1: return (xi % 4) < 2 ? 1.0 : 0.0;                                       // vertical bars
    case 2: return (std::abs(x - c) < 1.5 || std::abs(y - c) < 1.5) ? 1.0 : 0.0;   // cross
    case 3: return std::abs(std::hypot(x - c, y - c) - s / 3.0) < 1.2 ? 1.0 : 0.0;  // ring
    case 4: return ((xi / 3) + (yi / 3)) % 2 == 0 ? 1.0 : 0.0;                     // checkers
    case 5: return std::abs(x - y) < 1.5 ? 1.0 : 0.0;                              // diagonal
    case 6: return (std::abs(x - y) < 1.2 || std::abs(x + y - (s - 1.0)) < 1.2) ? 1.0 : 0.0;
    case 7: return (std::abs(x - c) < s / 4.0 && std::abs(y - c) < s / 4.0) ? 1.0 : 0.0;
    case 8: return (x < 2 || y < 2 || x > s - 3 || y > s - 3) ? 1.0 : 0.0;         // frame
    case 9: return (xi % 3 == 1 && yi % 3 == 1) ? 1.0 : 0.0;                       // dots
    case 10: return x < s / 2.0 ? 1.0 : 0.0;
    case 11: return y < s / 2.0 ? 1.0 : 0.0;
    case 12: return x / (s - 1.0);
    case 13: return y / (s - 1.0);
    case 14: return (xi + yi) % 2 == 0 ? 1.0 : 0.0;
    case 15: return std::abs(x - c) + std::abs(y - c) < s / 3.0 ? 1.0 : 0.0;  // diamond
    default: break;
  }
  throw ConfigError("no pattern for class " + std::to_string(cls));
}

void validate_corpus_spec(const CorpusSpec& spec) {
  if (spec.num_classes < 2 || spec.num_classes > 16) {
    throw ConfigError("num_classes must be in [2, 16], got " + std::to_string(spec.num_classes));
  }
  if (spec.side < 8 || spec.side > 16) throw ConfigError("side must be in [8, 16]");
  if (spec.per_class == 0 || spec.test_per_class == 0) throw ConfigError("per_class must be positive");
  if (spec.noise_level < 0.0) throw ConfigError("noise_level must be >= 0");
}

Split render_split(const CorpusSpec& spec, std::size_t per_class, Rng rng) {
  const std::size_t side = spec.side;
  const std::size_t dim = side * side;
  const std::size_t n = per_class * spec.num_classes;
  Split split{Array(Shape{n, dim}), {}};
  const auto max_shift = static_cast<long>(std::lround(spec.noise_level * static_cast<double>(side) / 2.0));
  std::size_t row = 0;
  for (std::size_t k = 0; k < per_class; ++k) {
    for (std::size_t cls = 0; cls < spec.num_classes; ++cls, ++row) {
      const double amp = 1.0 - 0.5 * spec.noise_level * rng.uniform();
      long dx = 0, dy = 0;
      if (max_shift > 0) {
        dx = static_cast<long>(rng.below(static_cast<std::size_t>(2 * max_shift + 1))) - max_shift;
        dy = static_cast<long>(rng.below(static_cast<std::size_t>(2 * max_shift + 1))) - max_shift;
      }
      const auto s = static_cast<long>(side);
      for (long y = 0; y < s; ++y) {
        for (long x = 0; x < s; ++x) {
          const long sx = ((x - dx) % s + s) % s;
          const long sy = ((y - dy) % s + s) % s;
          double v = amp * pattern_value(cls, static_cast<double>(sx), static_cast<double>(sy), side);
          if (spec.noise_level > 0.0) v += 0.5 * spec.noise_level * rng.normal();
          split.images.at(row, static_cast<std::size_t>(y * s + x)) = std::clamp(v, 0.0, 1.0);
        }
      }
      split.labels.push_back(static_cast<int>(cls));
    }
  }
  return split;
}

std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw CorruptFileError("IDX: truncated header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

}  // namespace

std::vector<std::size_t> Split::indices_of(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) out.push_back(i);
  }
  return out;
}

Array render_pattern(std::size_t cls, std::size_t side) {
  Array img(Shape{side * side});
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      img[y * side + x] = pattern_value(cls, static_cast<double>(x), static_cast<double>(y), side);
    }
  }
  return img;
}

ToyCorpus generate_toy_corpus(const CorpusSpec& spec, std::uint64_t seed) {
  validate_corpus_spec(spec);
  Rng rng(seed);
  ToyCorpus corpus;
  corpus.num_classes = spec.num_classes;
  corpus.side = spec.side;
  corpus.train = render_split(spec, spec.per_class, rng.split(1));
  corpus.test = render_split(spec, spec.test_per_class, rng.split(2));
  return corpus;
}

IdxArray read_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open IDX file " + path);
  const std::uint32_t magic = read_be32(in);
  if ((magic >> 8) != 0x08) throw CorruptFileError("IDX: only unsigned-byte payloads are supported: " + path);
  const std::uint32_t ndim = magic & 0xff;
  if (ndim == 0 || ndim > 4) throw CorruptFileError("IDX: bad dimension count in " + path);
  IdxArray out;
  std::size_t total = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    out.dims.push_back(read_be32(in));
    total *= out.dims.back();
  }
  out.data.resize(total);
  if (!in.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(total))) {
    throw CorruptFileError("IDX: truncated payload in " + path);
  }
  return out;
}

ToyCorpus load_idx_corpus(const std::string& images_path, const std::string& labels_path, const CorpusSpec& spec) {
  if (spec.num_classes < 2 || spec.num_classes > 16) throw ConfigError("num_classes must be in [2, 16]");
  const IdxArray imgs = read_idx(images_path);
  const IdxArray labs = read_idx(labels_path);
  if (imgs.dims.size() != 3 || labs.dims.size() != 1 || imgs.dims[0] != labs.dims[0]) {
    throw CorruptFileError("IDX: expected N x H x W images and N labels");
  }
  const std::size_t H = imgs.dims[1], W = imgs.dims[2], side = spec.side;
  auto downsample = [&](std::size_t n) {
    Array out(Shape{side * side});
    for (std::size_t y = 0; y < side; ++y) {
      const std::size_t y0 = y * H / side, y1 = std::max(y0 + 1, (y + 1) * H / side);
      for (std::size_t x = 0; x < side; ++x) {
        const std::size_t x0 = x * W / side, x1 = std::max(x0 + 1, (x + 1) * W / side);
        double s = 0.0;
        for (std::size_t yy = y0; yy < y1; ++yy) {
          for (std::size_t xx = x0; xx < x1; ++xx) s += imgs.data[n * H * W + yy * W + xx];
        }
        out[y * side + x] = s / (255.0 * static_cast<double>((y1 - y0) * (x1 - x0)));
      }
    }
    return out;
  };

  ToyCorpus corpus;
  corpus.num_classes = spec.num_classes;
  corpus.side = side;
  std::vector<std::size_t> taken(spec.num_classes, 0);
  std::vector<double> train, test;
  for (std::size_t n = 0; n < labs.dims[0]; ++n) {
    const std::size_t lab = labs.data[n];
    if (lab >= spec.num_classes) continue;
    if (taken[lab] >= spec.per_class + spec.test_per_class) continue;
    const Array img = downsample(n);
    auto& dst = taken[lab] < spec.per_class ? train : test;
    auto& split = taken[lab] < spec.per_class ? corpus.train : corpus.test;
    dst.insert(dst.end(), img.data().begin(), img.data().end());
    split.labels.push_back(static_cast<int>(lab));
    ++taken[lab];
  }
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    if (taken[k] < spec.per_class + spec.test_per_class) {
      throw ConfigError("IDX corpus has too few images of class " + std::to_string(k));
    }
  }
  corpus.train.images = Array(Shape{corpus.train.labels.size(), side * side}, std::move(train));
  corpus.test.images = Array(Shape{corpus.test.labels.size(), side * side}, std::move(test));
  return corpus;
}

// ---------------------------------------------------------------------------
// Autoencoder
// ---------------------------------------------------------------------------

Var Autoencoder::encode(const Var& x) const { return ad::scale(encoder.forward(x), 1.0 / latent_scale); }

Var Autoencoder::decode(const Var& z) const { return decoder.forward(ad::scale(z, latent_scale)); }

double reconstruction_mse(const Autoencoder& ae, const Array& images) {
  ad::NoGrad ng;
  Var x(images);
  return ad::mse(ae.decode(ae.encode(x)), x).item();
}

Array rows_of(const Array& m, std::span<const std::size_t> idx) {
  const std::size_t cols = m.cols();
  Array out(Shape{idx.size(), cols});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t c = 0; c < cols; ++c) out.at(i, c) = m.at(idx[i], c);
  }
  return out;
}

AutoencoderResult pretrain_autoencoder(const ToyCorpus& corpus, const AutoencoderSpec& spec, std::uint64_t seed) {
  const std::size_t dim = corpus.image_dim();
  if (spec.d_latent == 0 || spec.d_latent > dim) throw ConfigError("d_latent must be in [1, image_dim]");
  if (!(spec.latent_std > 0.0)) throw ConfigError("latent_std must be positive");
  Rng rng(seed);
  Rng init = rng.split(1);
  std::vector<std::size_t> enc{dim}, dec{spec.d_latent};
  for (auto h : spec.hidden) enc.push_back(h);
  enc.push_back(spec.d_latent);
  for (auto it = spec.hidden.rbegin(); it != spec.hidden.rend(); ++it) dec.push_back(*it);
  dec.push_back(dim);
  const Activation act = spec.hidden.empty() ? Activation::none : Activation::tanh;

  AutoencoderResult out;
  out.ae.encoder = Mlp(enc, act, init);
  out.ae.decoder = Mlp(dec, act, init);

  std::vector<Var> params = out.ae.encoder.parameters();
  for (const auto& p : out.ae.decoder.parameters()) params.push_back(p);
  Adam opt(spec.lr);
  Rng order = rng.split(2);
  const std::size_t n = corpus.train.size();
  const std::size_t batch = std::max<std::size_t>(1, std::min(spec.batch, n));
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    const auto perm = order.permutation(n);
    for (std::size_t start = 0; start + batch <= n; start += batch) {
      std::span<const std::size_t> idx(perm.data() + start, batch);
      Var x(rows_of(corpus.train.images, idx));
      Var loss = ad::mse(out.ae.decoder.forward(out.ae.encoder.forward(x)), x);
      if (!std::isfinite(loss.item())) throw TrainingError("autoencoder training diverged (non-finite loss)");
      auto g = ad::grad(loss, params);
      opt.step(params, g);
    }
  }
  out.ae.encoder.set_trainable(false);
  out.ae.decoder.set_trainable(false);

  {
    ad::NoGrad ng;
    const Array z = out.ae.encoder.forward(Var(corpus.train.images)).value();
    double mean = 0.0;
    for (double v : z.data()) mean += v;
    mean /= static_cast<double>(z.size());
    double var = 0.0;
    for (double v : z.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(z.size());
    out.ae.latent_scale = var > 0.0 ? std::sqrt(var) / spec.latent_std : 1.0;
  }
  out.recon_mse = reconstruction_mse(out.ae, corpus.test.images);
  if (!std::isfinite(out.recon_mse)) throw TrainingError("autoencoder reconstruction is non-finite");
  return out;
}

// ---------------------------------------------------------------------------
// Conditioning and denoiser
// ---------------------------------------------------------------------------

std::vector<double> embed_gamma(double gamma) {
  std::vector<double> e(kGammaEmbedDim);
  constexpr std::size_t half = kGammaEmbedDim / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double w = std::pow(64.0, static_cast<double>(k) / static_cast<double>(half - 1));
    e[k] = std::sin(w * gamma);
    e[half + k] = std::cos(w * gamma);
  }
  return e;
}

ClassEmbedder make_class_embedder(std::size_t num_classes, std::size_t dim, Rng& rng) {
  // Gram-Schmidt over the shorter side of a Gaussian matrix.
  const bool rows_major = num_classes <= dim;
  const std::size_t count = rows_major ? num_classes : dim;
  const std::size_t len = rows_major ? dim : num_classes;
  std::vector<std::vector<double>> basis;
  while (basis.size() < count) {
    std::vector<double> v(len);
    for (auto& x : v) x = rng.normal();
    for (const auto& b : basis) {
      double d = 0.0;
      for (std::size_t i = 0; i < len; ++i) d += v[i] * b[i];
      for (std::size_t i = 0; i < len; ++i) v[i] -= d * b[i];
    }
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm < 1e-8) continue;
    for (auto& x : v) x /= nrm;
    basis.push_back(std::move(v));
  }
  Array table(Shape{num_classes, dim});
  for (std::size_t a = 0; a < count; ++a) {
    for (std::size_t i = 0; i < len; ++i) {
      if (rows_major) {
        table.at(a, i) = basis[a][i];
      } else {
        table.at(i, a) = basis[a][i];
      }
    }
  }
  return ClassEmbedder{Var(std::move(table), false)};
}

Var embed_class(const ClassEmbedder& embedder, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= embedder.num_classes()) {
    throw DomainError("class label " + std::to_string(label) + " out of range");
  }
  const std::size_t d = embedder.dim();
  Array row(Shape{d});
  for (std::size_t i = 0; i < d; ++i) row[i] = embedder.table.value().at(static_cast<std::size_t>(label), i);
  return Var(std::move(row), true);
}

Var embed_class(const ClassEmbedder& embedder, std::span<const double> weights) {
  if (weights.size() != embedder.num_classes()) throw DimensionError("embed_class: weight count mismatch");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw DomainError("embed_class: negative class weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("embed_class: weights must sum to 1");
  const std::size_t d = embedder.dim();
  Array row(Shape{d}, 0.0);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    for (std::size_t i = 0; i < d; ++i) row[i] += weights[k] * embedder.table.value().at(k, i);
  }
  return Var(std::move(row), true);
}

Denoiser::Denoiser(std::size_t d_latent, std::size_t d_embed, std::vector<std::size_t> hidden, Rng& rng)
    : d_latent_(d_latent), d_embed_(d_embed) {
  std::vector<std::size_t> widths{d_latent + d_embed + kGammaEmbedDim};
  for (auto h : hidden) widths.push_back(h);
  widths.push_back(d_latent);
  net_ = Mlp(widths, Activation::tanh, rng);
  // Zero output layer: an untrained predictor outputs 0.
  auto& params = net_.parameters();
  params[params.size() - 2] = Var(Array(params[params.size() - 2].shape()), true);
  params.back() = Var(Array(params.back().shape()), true);
}

Var Denoiser::predict(const Var& z, const Var& c, std::span<const double> gamma) const {
  calls_->fetch_add(1);
  const bool single = z.value().rank() == 1;
  Var Z = single ? ad::reshape(z, {1, z.size()}) : z;
  Var C = c.value().rank() == 1 ? ad::reshape(c, {1, c.size()}) : c;
  const std::size_t rows = Z.shape()[0];
  if (Z.shape()[1] != d_latent_ || C.shape()[1] != d_embed_ || C.shape()[0] != rows) {
    throw DimensionError("denoiser: latent " + shape_str(z.shape()) + " / condition " + shape_str(c.shape()) +
                         " do not match (" + std::to_string(d_latent_) + ", " + std::to_string(d_embed_) + ")");
  }
  if (gamma.size() != rows) throw DimensionError("denoiser: one gamma per row required");
  Array emb(Shape{rows, kGammaEmbedDim});
  for (std::size_t r = 0; r < rows; ++r) {
    const auto e = embed_gamma(gamma[r]);
    for (std::size_t k = 0; k < kGammaEmbedDim; ++k) emb.at(r, k) = e[k];
  }
  std::vector<Var> parts{Z, C, ad::constant(std::move(emb))};
  Var out = net_.forward(ad::concat_cols(parts));
  return single ? ad::reshape(out, {d_latent_}) : out;
}

Var Denoiser::predict(const Var& z, const Var& c, double gamma) const {
  const std::size_t rows = z.value().rank() == 1 ? 1 : z.shape()[0];
  std::vector<double> g(rows, gamma);
  return predict(z, c, g);
}

DenoiserResult pretrain_denoiser(const Autoencoder& ae, const ToyCorpus& corpus, const ScheduleFamily& family,
                                 const DenoiserSpec& spec, std::uint64_t seed) {
  if (spec.max_T < 1) throw ConfigError("denoiser training needs schedules with T >= 1");
  Rng rng(seed);
  Rng init = rng.split(1);
  const std::size_t d_latent = ae.encoder.out_dim();
  DenoiserResult out;
  out.embedder = make_class_embedder(corpus.num_classes, spec.d_embed, init);
  out.embedder.table = Var(out.embedder.table.value(), true);
  out.denoiser = Denoiser(d_latent, spec.d_embed, spec.hidden, init);

  std::vector<NoiseSchedule> schedules;
  for (std::size_t T = 1; T <= spec.max_T; ++T) schedules.push_back(family.make(T));

  Array latents;
  {
    ad::NoGrad ng;
    latents = ae.encode(Var(corpus.train.images)).value();
  }

  std::vector<Var> params = out.denoiser.net().parameters();
  params.push_back(out.embedder.table);
  Adam opt(spec.lr);
  Rng draw = rng.split(2);
  const std::size_t n = corpus.train.size();
  const std::size_t B = spec.batch;
  double tail = 0.0;
  std::size_t tail_count = 0;
  for (std::size_t step = 0; step < spec.steps; ++step) {
    std::vector<std::size_t> idx(B);
    std::vector<int> labels(B);
    std::vector<double> gammas(B);
    Array noisy(Shape{B, d_latent});
    Array eps(Shape{B, d_latent});
    for (std::size_t r = 0; r < B; ++r) {
      idx[r] = draw.below(n);
      labels[r] = corpus.train.labels[idx[r]];
      const auto& sch = schedules[draw.below(spec.max_T)];
      const double g = sch.gamma_at(1 + draw.below(sch.T));
      gammas[r] = g;
      for (std::size_t k = 0; k < d_latent; ++k) {
        const double e = draw.normal();
        eps.at(r, k) = e;
        noisy.at(r, k) = std::sqrt(g) * latents.at(idx[r], k) + std::sqrt(1.0 - g) * e;
      }
    }
    std::vector<std::size_t> lab_idx(labels.begin(), labels.end());
    Var c = ad::take_rows(out.embedder.table, lab_idx);
    Var pred = out.denoiser.predict(Var(noisy), c, gammas);
    Var loss = ad::mse(pred, Var(eps));
    if (!std::isfinite(loss.item())) throw TrainingError("denoiser training diverged (non-finite loss)");
    if (step + 100 >= spec.steps) {
      tail += loss.item() * static_cast<double>(d_latent);
      ++tail_count;
    }
    auto g = ad::grad(loss, params);
    opt.step(params, g);
  }
  out.train_loss = tail_count ? tail / static_cast<double>(tail_count) : 0.0;
  out.denoiser.net().set_trainable(false);
  out.embedder.table = Var(out.embedder.table.value(), false);
  out.denoiser.reset_calls();
  return out;
}

double denoising_mse(const Denoiser& f, const ClassEmbedder& embedder, const Autoencoder& ae, const Split& data,
                     const NoiseSchedule& schedule, std::size_t t, std::uint64_t seed) {
  ad::NoGrad ng;
  Rng rng(seed);
  const Array z0 = ae.encode(Var(data.images)).value();
  const std::size_t d = z0.cols();
  const double g = schedule.gamma_at(t);
  Array noisy(z0.shape()), eps(z0.shape());
  for (std::size_t i = 0; i < z0.size(); ++i) {
    eps[i] = rng.normal();
    noisy[i] = std::sqrt(g) * z0[i] + std::sqrt(1.0 - g) * eps[i];
  }
  std::vector<std::size_t> lab(data.labels.begin(), data.labels.end());
  Var c = ad::take_rows(embedder.table, lab);
  Var pred = f.predict(Var(noisy), c, g);
  return ad::mse(pred, Var(eps)).item() * static_cast<double>(d);
}

void ModelBundle::freeze() {
  ae.encoder.set_trainable(false);
  ae.decoder.set_trainable(false);
  denoiser.net().set_trainable(false);
  embedder.table = Var(embedder.table.value(), false);
  frozen = true;
}

std::vector<Array> ModelBundle::parameter_values() const {
  std::vector<Array> out = ae.encoder.snapshot();
  for (auto& a : ae.decoder.snapshot()) out.push_back(std::move(a));
  for (auto& a : denoiser.net().snapshot()) out.push_back(std::move(a));
  out.push_back(embedder.table.value());
  out.push_back(Array::scalar(ae.latent_scale));
  return out;
}

ModelBundle pretrain_bundle(const ToyCorpus& corpus, const ScheduleFamily& family, const BundleSpec& spec,
                            std::uint64_t seed) {
  ModelBundle b;
  auto ae = pretrain_autoencoder(corpus, spec.autoencoder, derive_seed(seed, 1));
  b.ae = std::move(ae.ae);
  b.recon_mse = ae.recon_mse;
  auto dn = pretrain_denoiser(b.ae, corpus, family, spec.denoiser, derive_seed(seed, 2));
  b.denoiser = std::move(dn.denoiser);
  b.embedder = std::move(dn.embedder);
  b.num_classes = corpus.num_classes;
  b.side = corpus.side;
  b.freeze();
  return b;
}

// ---------------------------------------------------------------------------
// Witness networks
// ---------------------------------------------------------------------------

const std::vector<std::string>& witness_archs() {
  static const std::vector<std::string> archs{"mlp-s", "mlp-m", "mlp-d", "mixer-s"};
  return archs;
}

WitnessNet WitnessNet::build(const std::string& arch, std::size_t side, std::size_t num_classes,
                             std::uint64_t seed) {
  WitnessNet w;
  w.arch_ = arch;
  w.side_ = side;
  w.classes_ = num_classes;
  Rng rng(derive_seed(seed, fnv1a(arch)));
  const std::size_t D = side * side;
  if (arch == "mlp-s") {
    w.mlp_ = Mlp({D, 64, 64, num_classes}, Activation::relu, rng);
  } else if (arch == "mlp-m") {
    w.mlp_ = Mlp({D, 128, 128, num_classes}, Activation::relu, rng);
  } else if (arch == "mlp-d") {
    w.mlp_ = Mlp({D, 64, 64, 64, 64, num_classes}, Activation::relu, rng);
  } else if (arch == "logistic") {
    w.mlp_ = Mlp({D, num_classes}, Activation::none, rng);
  } else if (arch == "linear") {
    w.mlp_ = Mlp({D, 16, num_classes}, Activation::none, rng);
  } else if (arch == "mixer-s") {
    w.patch_ = 1;
    for (std::size_t p : {4, 3, 2}) {
      if (side % p == 0) {
        w.patch_ = p;
        break;
      }
    }
    const std::size_t per_row = side / w.patch_;
    w.tokens_ = per_row * per_row;
    w.channels_ = 8;
    const std::size_t pd = w.patch_ * w.patch_;
    for (std::size_t ty = 0; ty < per_row; ++ty) {
      for (std::size_t tx = 0; tx < per_row; ++tx) {
        for (std::size_t y = 0; y < w.patch_; ++y) {
          for (std::size_t x = 0; x < w.patch_; ++x) {
            w.patch_order_.push_back((ty * w.patch_ + y) * side + tx * w.patch_ + x);
          }
        }
      }
    }
    for (std::size_t ch = 0; ch < w.channels_; ++ch) {
      for (std::size_t tok = 0; tok < w.tokens_; ++tok) w.channel_major_.push_back(tok * w.channels_ + ch);
    }
    auto dense = [&](std::size_t out, std::size_t in) {
      Array W(Shape{out, in}), b(Shape{out});
      init_dense(rng, in, Activation::relu, W, b);
      w.params_.emplace_back(std::move(W), true);
      w.params_.emplace_back(std::move(b), true);
    };
    dense(w.channels_, pd);
    dense(w.tokens_, w.tokens_);
    dense(num_classes, w.channels_ * w.tokens_);
    return w;
  } else {
    throw ConfigError("unknown witness architecture '" + arch + "'");
  }
  w.params_ = w.mlp_.parameters();
  return w;
}

Var WitnessNet::mixer_trunk(std::span<const Var> p, const Var& x) const {
  Var X = x.value().rank() == 1 ? ad::reshape(x, {1, x.size()}) : x;
  const std::size_t B = X.shape()[0];
  const std::size_t pd = patch_ * patch_;
  Var patches = ad::reshape(ad::take_cols(X, patch_order_), {B * tokens_, pd});
  Var h = ad::relu(ad::affine(patches, p[0], p[1]));  // per-patch channel MLP
  Var by_channel = ad::take_cols(ad::reshape(h, {B, tokens_ * channels_}), channel_major_);
  Var mixed = ad::relu(ad::affine(ad::reshape(by_channel, {B * channels_, tokens_}), p[2], p[3]));
  return ad::reshape(mixed, {B, channels_ * tokens_});
}

Var WitnessNet::logits_with(std::span<const Var> params, const Var& x) const {
  if (params.size() != params_.size()) throw ContractError("witness: wrong parameter count");
  if (arch_ == "mixer-s") {
    Var out = ad::affine(mixer_trunk(params, x), params[4], params[5]);
    return x.value().rank() == 1 ? ad::reshape(out, {classes_}) : out;
  }
  return mlp_.forward_with(params, x);
}

Var WitnessNet::features_with(std::span<const Var> params, const Var& x) const {
  if (params.size() != params_.size()) throw ContractError("witness: wrong parameter count");
  if (arch_ == "mixer-s") return mixer_trunk(params, x);
  if (arch_ == "linear") return ad::affine(x, params[0], params[1]);
  return mlp_.penultimate_with(params, x);
}

double accuracy(const WitnessNet& net, const Array& images, std::span<const int> labels) {
  ad::NoGrad ng;
  const Array logits = net.logits(Var(images)).value();
  std::size_t correct = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    }
    if (static_cast<int>(best) == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

void train_classifier(WitnessNet& net, const Array& images, std::span<const int> labels,
                      const ClassifierTraining& cfg, Rng& rng) {
  const std::size_t n = labels.size();
  if (n == 0) throw ContractError("train_classifier: empty training set");
  auto& params = net.params();
  set_trainable(params, true);
  Sgd opt(cfg.lr, cfg.momentum);
  std::vector<std::size_t> perm;
  std::size_t cursor = n;
  const std::size_t batch = cfg.with_replacement ? cfg.batch : std::min(cfg.batch, n);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) {
      if (cfg.with_replacement) {
        i = rng.below(n);
      } else {
        if (cursor >= n) {
          perm = rng.permutation(n);
          cursor = 0;
        }
        i = perm[cursor++];
      }
    }
    std::vector<int> lab(batch);
    for (std::size_t k = 0; k < batch; ++k) lab[k] = labels[idx[k]];
    Var loss = ad::cross_entropy(net.logits(Var(rows_of(images, idx))), lab);
    if (!std::isfinite(loss.item())) throw TrainingError("classifier training diverged (non-finite loss)");
    auto g = ad::grad(loss, params);
    opt.step(params, g);
  }
}

}  // namespace ld3m
