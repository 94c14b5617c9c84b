#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "topogan/classifier.hpp"
#include "topogan/error.hpp"

using namespace topogan;
using namespace topogan::clf;

namespace {

data::Dataset two_class(std::size_t per_class, std::uint64_t seed) {
  data::CorpusOptions o;
  o.counts = {per_class, per_class, 0, 0, 0, 0, 0, 0};
  o.seed = seed;
  return data::generate_corpus(o);
}

ClassifierConfig binary_config() {
  ClassifierConfig c;
  c.num_classes = 2;
  return c;
}

}  // namespace

TEST_CASE("logit shape, finiteness and seeded construction") {
  auto m = build_classifier(ClassifierConfig{}, 1);
  const auto out = m.forward(Var<float>(Tensor<float>({2, 3, 64, 64})), Mode::eval);
  CHECK(out.shape() == Shape{2, 8});
  for (float v : out.value().vec()) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(m.forward(Var<float>(Tensor<float>({2, 1, 64, 64})), Mode::eval), ShapeError);

  auto a = build_classifier(ClassifierConfig{}, 3), b = build_classifier(ClassifierConfig{}, 3);
  auto c = build_classifier(ClassifierConfig{}, 4);
  const auto& ea = a.store().entries();
  for (std::size_t i = 0; i < ea.size(); ++i) CHECK(ea[i].param.value().vec() == b.store().entries()[i].param.value().vec());
  CHECK(ea[0].param.value().vec() != c.store().entries()[0].param.value().vec());

  ClassifierConfig one;
  one.num_classes = 1;
  CHECK_THROWS_AS(Classifier<float>{one}, ValueError);
  CHECK_THROWS_AS(ClassifierConfig::with_base_width(0, 8), ValueError);
}

TEST_CASE("predictions are probability rows and eval mode ignores batch composition") {
  auto m = build_classifier(ClassifierConfig{}, 2);
  const auto ds = two_class(6, 2);
  const auto p = predict_batch(m, ds, 5);
  REQUIRE(p.labels.size() == ds.size());
  REQUIRE(p.probabilities.size() == ds.size() * 8);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double* row = p.probabilities.data() + i * 8;
    CHECK(std::abs(std::accumulate(row, row + 8, 0.0) - 1.0) < 1e-9);
    CHECK(p.labels[i] == std::max_element(row, row + 8) - row);
  }
  const auto whole = predict_batch(m, ds, 0);
  CHECK(whole.labels == p.labels);
  for (std::size_t i = 0; i < p.probabilities.size(); ++i) CHECK(std::abs(whole.probabilities[i] - p.probabilities[i]) < 1e-6);
}

TEST_CASE("embeddings") {
  auto m = build_classifier(ClassifierConfig{}, 5);
  const auto ds = two_class(3, 5);
  const auto e = extract_embeddings(m, ds);
  CHECK(e.shape() == Shape{6, 128});
  double d = 0;
  const std::size_t first = 0, other = 5;
  REQUIRE(ds.images[first].class_label != ds.images[other].class_label);
  for (std::size_t j = 0; j < 128; ++j) d += std::pow(e[first * 128 + j] - e[other * 128 + j], 2);
  CHECK(d > 0);
  CHECK(ClassifierConfig::with_base_width(4, 8).embedding_dim() == 32);
  CHECK_THROWS_AS(extract_embeddings(m, data::Dataset{}), ValueError);
}

TEST_CASE("training: first-epoch loss near ln k, determinism, history length") {
  const auto ds = two_class(24, 6);
  ClassifierTrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 16;
  tc.seed = 6;
  auto a = build_classifier(ClassifierConfig{}, 6);
  auto b = build_classifier(ClassifierConfig{}, 6);
  std::size_t calls = 0;
  const auto ra = train_classifier(a, ds, {}, tc, [&](std::size_t epoch, const TrainHistory& h) {
    CHECK(h.size() == epoch + 1);
    ++calls;
  });
  const auto rb = train_classifier(b, ds, {}, tc);
  CHECK(calls == 2);
  CHECK(ra.history.size() == 2);
  CHECK(ra.history.train_loss[0] <= std::log(8.0) + 0.5);
  CHECK(ra.history.train_loss == rb.history.train_loss);
  CHECK(ra.history.val_acc == rb.history.val_acc);
  CHECK(ra.missing_classes == std::vector<int>{2, 3, 4, 5, 6, 7});
  for (std::size_t i = 0; i < a.store().entries().size(); ++i)
    CHECK(a.store().entries()[i].param.value().vec() == b.store().entries()[i].param.value().vec());
}

TEST_CASE("training rejects bad input") {
  auto m = build_classifier(binary_config(), 1);
  ClassifierTrainConfig tc;
  CHECK_THROWS_AS(train_classifier(m, data::Dataset{}, {}, tc), ValueError);
  data::CorpusOptions o;
  o.counts = {2, 0, 2, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(train_classifier(m, data::generate_corpus(o), {}, tc), ValueError);
  tc.epochs = 0;
  CHECK_THROWS_AS(train_classifier(m, two_class(2, 1), {}, tc), ValueError);
}

TEST_CASE("a separable two-class task is learned within five epochs") {
  const auto all = two_class(96, 7);
  auto [train, val] = data::patient_holdout(all, 0.25, 7);
  auto m = build_classifier(binary_config(), 7);
  ClassifierTrainConfig tc;
  tc.epochs = 5;
  tc.seed = 7;
  const auto r = train_classifier(m, train, val, tc);
  CHECK(r.history.val_acc.back() >= 0.99);
  CHECK(r.missing_classes.empty());
}

TEST_CASE("property: training order is irrelevant when shuffling is on") {
  // The shuffle RNG fully determines batch composition, so permuting the
  // input changes the visit order but keeps the accuracy in the same regime.
  const auto ds = two_class(16, 8);
  std::vector<std::size_t> perm(ds.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  const auto rev = ds.subset(perm);
  ClassifierTrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 8;
  tc.seed = 8;
  auto a = build_classifier(binary_config(), 8), b = build_classifier(binary_config(), 8);
  const auto ra = train_classifier(a, ds, {}, tc), rb = train_classifier(b, rev, {}, tc);
  CHECK(std::abs(ra.history.val_acc.back() - rb.history.val_acc.back()) <= 0.25);

  // Predictions are per-image: permuting the inputs permutes the outputs.
  const auto pa = predict_batch(a, ds), pr = predict_batch(a, rev);
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(pa.labels[perm[i]] == pr.labels[i]);
}

TEST_CASE("average test time") {
  const auto ds = two_class(2, 9);
  auto narrow = build_classifier(ClassifierConfig::with_base_width(4, 8), 9);
  auto wide = build_classifier(ClassifierConfig::with_base_width(64, 8), 9);
  const auto tn = measure_att(narrow, ds, 3), tw = measure_att(wide, ds, 3);
  CHECK(tn.timings == 12);
  CHECK(tn.mean_seconds > 0);
  CHECK(tn.std_seconds >= 0);
  CHECK(tw.mean_seconds >= tn.mean_seconds);
  CHECK(wide.parameter_count() > narrow.parameter_count());
  CHECK_THROWS_AS(measure_att(narrow, ds, 0), ValueError);
}
