// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "ld3m/errors.hpp"
#include "ld3m/eval.hpp"

using namespace ld3m;

namespace {

EvalSpec quick_spec() {
  EvalSpec s;
  s.archs = {"logistic", "mlp-s"};
  s.num_seeds = 2;
  s.steps = 30;
  return s;
}

}  // namespace

TEST_CASE("sample_std") {
  const std::vector<double> one{0.7};
  CHECK(sample_std(one) == 0.0);
  const std::vector<double> xs{1.0, 2.0, 4.0};
  // mean 7/3, squared deviations 16/9 + 1/9 + 25/9 = 42/9, divided by n - 1.
  CHECK(sample_std(xs) == doctest::Approx(std::sqrt(21.0 / 9.0)).epsilon(1e-12));
  const std::vector<double> same{0.5, 0.5, 0.5};
  CHECK(sample_std(same) == 0.0);
}

TEST_CASE("evaluate_images") {
  const ToyCorpus& corpus = testing::tiny_corpus();
  const EvalSpec spec = quick_spec();
  const Array before = corpus.train.images;
  const EvalResult r = evaluate_images(corpus.train.images, corpus.train.labels, corpus, spec);

  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].arch == "logistic");
  CHECK(r.rows[1].arch == "mlp-s");
  double total = 0.0;
  for (const auto& row : r.rows) {
    REQUIRE(row.accuracies.size() == 2);
    for (double a : row.accuracies) {
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
      total += a;
    }
    CHECK(row.std == doctest::Approx(sample_std(row.accuracies)).epsilon(1e-15));
  }
  CHECK(r.mean() == doctest::Approx(total / 4.0).epsilon(1e-12));
  for (std::size_t i = 0; i < before.size(); ++i) REQUIRE(before[i] == corpus.train.images[i]);

  EvalSpec serial = spec;
  serial.parallel = false;
  const EvalResult s = evaluate_images(corpus.train.images, corpus.train.labels, corpus, serial);
  for (std::size_t i = 0; i < r.rows.size(); ++i) CHECK(r.rows[i].accuracies == s.rows[i].accuracies);
  CHECK(r.fingerprint == s.fingerprint);

  EvalSpec none = spec;
  none.num_seeds = 0;
  CHECK_THROWS_AS(evaluate_images(corpus.train.images, corpus.train.labels, corpus, none), ConfigError);
  const std::vector<int> short_labels{0, 1};
  CHECK_THROWS_AS(evaluate_images(corpus.train.images, short_labels, corpus, spec), DimensionError);
}

TEST_CASE("evaluate_distilled leaves the set untouched") {
  const ToyCorpus& corpus = testing::tiny_corpus();
  const auto& b = testing::tiny_bundle();
  const DistilledSet ds = init_distilled(corpus, b, 2, 3);
  const Array Z = ds.Z.value(), c = ds.c.value();
  const NoiseSchedule s = ScheduleFamily{}.make(5);
  const EvalResult a = evaluate_distilled(ds, b, s, DistillMode::ld3m, corpus, quick_spec());
  const EvalResult again = evaluate_distilled(ds, b, s, DistillMode::ld3m, corpus, quick_spec());
  for (std::size_t i = 0; i < Z.size(); ++i) REQUIRE(ds.Z.value()[i] == Z[i]);
  for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(ds.c.value()[i] == c[i]);
  CHECK(a.fingerprint == again.fingerprint);
  CHECK(a.mean() == again.mean());
}

TEST_CASE("compare_conditions") {
  const ToyCorpus& corpus = testing::tiny_corpus();
  const EvalSpec spec = quick_spec();
  const EvalResult real = evaluate_random_real(corpus, 2, 1, spec);
  const EvalResult other = evaluate_random_real(corpus, 2, 8, spec);
  const EvalResult dup = evaluate_random_real(corpus, 2, 1, spec);

  const Comparison cmp = compare_conditions({{"b", real}, {"a", other}, {"c", dup}});
  REQUIRE(cmp.rows.size() == 3);
  CHECK(cmp.rows[0].label == "b");
  CHECK(cmp.rows[1].label == "a");
  CHECK(cmp.rows[2].label == "c");
  CHECK_FALSE(cmp.rows[0].duplicate_of.has_value());
  CHECK_FALSE(cmp.rows[1].duplicate_of.has_value());
  REQUIRE(cmp.rows[2].duplicate_of.has_value());
  CHECK(*cmp.rows[2].duplicate_of == 0);
  CHECK(cmp.delta[1][0] == doctest::Approx(other.mean() - real.mean()).epsilon(1e-12));
  CHECK(cmp.delta[0][0] == 0.0);
  CHECK(cmp.rows[0].std == doctest::Approx(real.std()).epsilon(1e-15));

  EvalSpec changed = spec;
  changed.steps = 31;
  const EvalResult mismatch = evaluate_random_real(corpus, 2, 1, changed);
  CHECK_THROWS_AS(compare_conditions({{"x", real}, {"y", mismatch}}), ContractError);

  CHECK_THROWS_AS(evaluate_random_real(corpus, 13, 1, spec), ContractError);
}
