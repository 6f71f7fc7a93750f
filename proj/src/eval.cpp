// SPDX-License-Identifier: Apache-2.0
#include "ld3m/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>

#include "ld3m/errors.hpp"

namespace ld3m {

namespace {

std::uint64_t fingerprint_of(const Array& images, std::span<const int> labels) {
  std::uint64_t h = mix64(images.size());
  for (double v : images.data()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = mix64(h ^ bits);
  }
  for (int l : labels) h = mix64(h ^ static_cast<std::uint64_t>(l));
  return h;
}

}  // namespace

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double EvalResult::mean() const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    for (double a : r.accuracies) {
      s += a;
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

double EvalResult::std() const {
  std::vector<double> all;
  for (const auto& r : rows) all.insert(all.end(), r.accuracies.begin(), r.accuracies.end());
  return sample_std(all);
}

EvalResult evaluate_images(const Array& images, std::span<const int> labels, const ToyCorpus& corpus,
                           const EvalSpec& spec) {
  if (corpus.test.size() == 0) throw ContractError("evaluation needs a nonempty test split");
  if (spec.num_seeds == 0) throw ConfigError("num_seeds must be positive");
  if (images.rows() != labels.size()) throw DimensionError("evaluate: image/label count mismatch");
  const std::size_t M = labels.size();
  ClassifierTraining train;
  train.steps = spec.steps;
  train.lr = spec.lr;
  train.momentum = spec.momentum;
  train.batch = spec.batch ? spec.batch : std::min<std::size_t>(64, 8 * M);
  train.with_replacement = true;

  const std::size_t A = spec.archs.size(), S = spec.num_seeds;
  std::vector<double> acc(A * S, 0.0);
  std::vector<std::exception_ptr> errors(A * S);
  const std::vector<int> lab(labels.begin(), labels.end());
  const auto cells = static_cast<long>(A * S);
#pragma omp parallel for schedule(dynamic) if (spec.parallel)
  for (long cell = 0; cell < cells; ++cell) {
    const std::size_t a = static_cast<std::size_t>(cell) / S, s = static_cast<std::size_t>(cell) % S;
    try {
      const std::uint64_t seed = derive_seed(spec.seed, s);
      WitnessNet net = WitnessNet::build(spec.archs[a], corpus.side, corpus.num_classes, seed);
      Rng rng = Rng(seed).split(7);
      train_classifier(net, images, lab, train, rng);
      acc[static_cast<std::size_t>(cell)] = accuracy(net, corpus.test.images, corpus.test.labels);
    } catch (...) {
      errors[static_cast<std::size_t>(cell)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  EvalResult out;
  out.spec = spec;
  out.fingerprint = fingerprint_of(images, labels);
  for (std::size_t a = 0; a < A; ++a) {
    ArchResult r;
    r.arch = spec.archs[a];
    r.accuracies.assign(acc.begin() + static_cast<long>(a * S), acc.begin() + static_cast<long>((a + 1) * S));
    for (double x : r.accuracies) r.mean += x;
    r.mean /= static_cast<double>(S);
    r.std = sample_std(r.accuracies);
    out.rows.push_back(std::move(r));
  }
  return out;
}

EvalResult evaluate_distilled(const DistilledSet& ds, const ModelBundle& bundle, const NoiseSchedule& schedule,
                              DistillMode mode, const ToyCorpus& corpus, const EvalSpec& spec) {
  const Array images = synthesize_images(ds, bundle, schedule, mode, kDecodeSeed);
  EvalResult r = evaluate_images(images, ds.labels, corpus, spec);
  r.fingerprint = mix64(r.fingerprint ^ static_cast<std::uint64_t>(mode));
  return r;
}

EvalResult evaluate_random_real(const ToyCorpus& corpus, std::size_t ipc, std::uint64_t seed, const EvalSpec& spec) {
  Rng rng(seed);
  std::vector<std::size_t> rows;
  std::vector<int> labels;
  for (std::size_t k = 0; k < corpus.num_classes; ++k) {
    const auto idx = corpus.train.indices_of(static_cast<int>(k));
    if (idx.size() < ipc) throw ContractError("random-real baseline: too few images of a class");
    Rng r = rng.split(k);
    const auto perm = r.permutation(idx.size());
    for (std::size_t i = 0; i < ipc; ++i) {
      rows.push_back(idx[perm[i]]);
      labels.push_back(static_cast<int>(k));
    }
  }
  return evaluate_images(rows_of(corpus.train.images, rows), labels, corpus, spec);
}

Comparison compare_conditions(const std::vector<ConditionResult>& conditions) {
  Comparison out;
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    const auto& c = conditions[i];
    if (!c.result.spec.same_protocol(conditions.front().result.spec)) {
      throw ContractError("compare_conditions: '" + c.label + "' was evaluated under a different protocol");
    }
    ComparisonRow row{c.label, c.result.mean(), c.result.std(), std::nullopt};
    for (std::size_t j = 0; j < i; ++j) {
      if (conditions[j].result.fingerprint == c.result.fingerprint) {
        row.duplicate_of = j;
        break;
      }
    }
    out.rows.push_back(row);
  }
  for (const auto& a : out.rows) {
    std::vector<double> d;
    for (const auto& b : out.rows) d.push_back(a.mean - b.mean);
    out.delta.push_back(std::move(d));
  }
  return out;
}

}  // namespace ld3m
