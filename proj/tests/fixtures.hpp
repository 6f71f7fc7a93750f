// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small, fast corpus and bundle shared by the model-level tests.

#include "ld3m/models.hpp"

namespace ld3m::testing {

inline CorpusSpec tiny_corpus_spec() {
  CorpusSpec s;
  s.num_classes = 3;
  s.per_class = 12;
  s.test_per_class = 6;
  s.side = 8;
  s.noise_level = 0.2;
  return s;
}

inline BundleSpec tiny_bundle_spec() {
  BundleSpec b;
  b.autoencoder.d_latent = 4;
  b.autoencoder.hidden = {16};
  b.autoencoder.epochs = 20;
  b.autoencoder.batch = 8;
  b.denoiser.d_embed = 3;
  b.denoiser.hidden = {16};
  b.denoiser.steps = 150;
  b.denoiser.batch = 16;
  b.denoiser.max_T = 20;
  return b;
}

inline const ToyCorpus& tiny_corpus() {
  static const ToyCorpus c = generate_toy_corpus(tiny_corpus_spec(), 21);
  return c;
}

inline const ModelBundle& tiny_bundle() {
  static const ModelBundle b = pretrain_bundle(tiny_corpus(), ScheduleFamily{}, tiny_bundle_spec(), 5);
  return b;
}

}  // namespace ld3m::testing
