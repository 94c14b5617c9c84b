#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "topogan/cgan.hpp"
#include "topogan/error.hpp"
#include "topogan/gradcheck.hpp"

using namespace topogan;
using namespace topogan::gan;

namespace {

double bce(double p, double target) { return -(target * std::log(p) + (1 - target) * std::log(1 - p)); }

data::Dataset tiny_corpus(std::size_t per_class, std::uint64_t seed) {
  data::CorpusOptions o;
  o.counts = {per_class, per_class, 0, 0, 0, 0, 0, 0};
  o.seed = seed;
  return data::generate_corpus(o);
}

GanTrainConfig quick_config(std::uint64_t seed) {
  GanTrainConfig c;
  c.epochs = 1;
  c.batch_size = 4;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("sample_noise is uniform on [-1, 1]") {
  Rng rng(3);
  const auto z = sample_noise<double>(200, rng);
  CHECK(z.shape() == Shape{200, kNoiseDim});
  double mean = 0, sq = 0;
  for (double v : z.vec()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
    mean += v;
    sq += v * v;
  }
  mean /= static_cast<double>(z.size());
  sq /= static_cast<double>(z.size());
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(sq - 1.0 / 3.0) < 0.01);
  CHECK_THROWS_AS(sample_noise<double>(0, rng), ValueError);
}

TEST_CASE("weight init statistics and seeding") {
  Generator<float> g(GeneratorConfig::for_profile(Profile::desk));
  Rng rng(5);
  nn::init_weights(g.store(), 0.02, rng);
  double n = 0, sum = 0, sq = 0;
  for (const auto& e : g.store().entries()) {
    const auto& v = e.param.value().vec();
    switch (e.kind) {
      case nn::ParamKind::weight:
        for (float x : v) {
          n += 1;
          sum += x;
          sq += static_cast<double>(x) * x;
        }
        break;
      case nn::ParamKind::bn_scale:
        for (float x : v) CHECK(x == 1.0f);
        break;
      default:
        for (float x : v) CHECK(x == 0.0f);
    }
  }
  REQUIRE(n >= 1e5);
  const double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean) < 0.001);
  CHECK(std::abs(sd - 0.02) < 0.002);

  Rng bad(5);
  CHECK_THROWS_AS(nn::init_weights(g.store(), 0.0, bad), ValueError);

  Generator<float> a(GeneratorConfig::for_profile(Profile::desk)), b(GeneratorConfig::for_profile(Profile::desk));
  Rng ra(9), rb(9);
  nn::init_weights(a.store(), 0.02, ra);
  nn::init_weights(b.store(), 0.02, rb);
  for (std::size_t i = 0; i < a.store().entries().size(); ++i)
    CHECK(a.store().entries()[i].param.value().vec() == b.store().entries()[i].param.value().vec());
}

TEST_CASE("generator stage shapes and output range") {
  Generator<float> g(GeneratorConfig::for_profile(Profile::desk));
  Rng rng(1);
  nn::init_weights(g.store(), 0.02, rng);
  const auto z = sample_noise<float>(3, rng);
  const auto x = g.forward(z, {}, Mode::train);
  CHECK(x.shape() == Shape{3, 3, 64, 64});
  const auto& st = g.stage_shapes();
  REQUIRE(st.size() == 5);
  CHECK(st[0] == Shape{3, 128, 4, 4});
  CHECK(st[1] == Shape{3, 64, 8, 8});
  CHECK(st[2] == Shape{3, 32, 16, 16});
  CHECK(st[3] == Shape{3, 16, 32, 32});
  CHECK(st[4] == Shape{3, 3, 64, 64});
  for (float v : x.value().vec()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  const auto again = g.forward(z, {}, Mode::train);
  CHECK(again.value().vec() == x.value().vec());
  CHECK_THROWS_AS(g.forward(sample_noise<float>(2, rng, 50), {}, Mode::train), ShapeError);
}

TEST_CASE("discriminator halves the resolution per stage and has two heads") {
  Discriminator<float> d(DiscriminatorConfig::for_profile(Profile::desk, 8));
  Rng rng(2);
  nn::init_weights(d.store(), 0.02, rng);
  Tensor<float> x({4, 3, 64, 64});
  std::uniform_real_distribution<float> u(-1, 1);
  for (std::size_t i = 0; i < x.size() / 2; ++i) x[i] = u(rng);
  // Rows 2 and 3 duplicate rows 0 and 1.
  std::copy_n(x.data(), x.size() / 2, x.data() + x.size() / 2);
  const auto out = d.forward(Var<float>(x), {}, Mode::eval);
  CHECK(out.adv_prob.shape() == Shape{4, 1});
  CHECK(out.class_logits.shape() == Shape{4, 8});
  const auto& st = d.stage_shapes();
  REQUIRE(st.size() == 5);
  CHECK(st[0] == Shape{4, 3, 64, 64});
  CHECK(st[1] == Shape{4, 16, 32, 32});
  CHECK(st[2] == Shape{4, 32, 16, 16});
  CHECK(st[3] == Shape{4, 64, 8, 8});
  CHECK(st[4] == Shape{4, 128, 4, 4});
  for (std::size_t i = 0; i < 2; ++i) {
    // GEMM blocking may round duplicate rows differently in the last bit.
    CHECK(std::abs(out.adv_prob.value()[i] - out.adv_prob.value()[i + 2]) < 1e-6f);
    for (std::size_t c = 0; c < 8; ++c)
      CHECK(std::abs(out.class_logits.value()[i * 8 + c] - out.class_logits.value()[(i + 2) * 8 + c]) < 1e-6f);
  }
  for (float p : out.adv_prob.value().vec()) {
    CHECK(p > 0.0f);
    CHECK(p < 1.0f);
  }
  CHECK_THROWS_AS(d.forward(Var<float>(Tensor<float>({2, 3, 32, 32})), {}, Mode::eval), ShapeError);

  Discriminator<float> no_head(DiscriminatorConfig::for_profile(Profile::desk, 0));
  nn::init_weights(no_head.store(), 0.02, rng);
  CHECK_FALSE(no_head.forward(Var<float>(x), {}, Mode::eval).class_logits.defined());
}

TEST_CASE("conditional networks need one valid label per row") {
  auto gc = GeneratorConfig::for_profile(Profile::desk);
  gc.label_classes = 2;
  Generator<float> g(gc);
  Rng rng(4);
  nn::init_weights(g.store(), 0.02, rng);
  const auto z = sample_noise<float>(2, rng);
  const std::vector<int> ok{0, 1}, short_labels{0}, out_of_range{0, 2};
  CHECK(g.forward(z, ok, Mode::train).shape() == Shape{2, 3, 64, 64});

  auto dc = DiscriminatorConfig::for_profile(Profile::desk, 2);
  dc.label_classes = 2;
  Discriminator<float> d(dc);
  nn::init_weights(d.store(), 0.02, rng);
  d.forward(g.forward(z, ok, Mode::train), ok, Mode::train);
  CHECK(d.stage_shapes()[0] == Shape{2, 4, 64, 64});
  CHECK_THROWS_AS(g.forward(z, short_labels, Mode::train), ShapeError);
  CHECK_THROWS_AS(g.forward(z, out_of_range, Mode::train), ValueError);

  // Flipping the label changes the output.
  const std::vector<int> a{0, 0}, b{1, 1};
  CHECK(g.forward(z, a, Mode::eval).value().vec() != g.forward(z, b, Mode::eval).value().vec());
}

TEST_CASE("adversarial loss identities") {
  const std::vector<double> half(16, 0.5);
  const auto eq = adversarial_losses(half, half, Objective::nonsaturating);
  CHECK(std::abs(eq.loss_d - 2 * std::log(2.0)) < 1e-12);
  CHECK(std::abs(eq.loss_g - std::log(2.0)) < 1e-12);
  CHECK(std::abs(adversarial_losses(half, half, Objective::saturating).loss_g - std::log(0.5)) < 1e-12);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(1 + trial % 9), f(1 + (trial * 7) % 11);
    for (auto& v : r) v = u(rng);
    for (auto& v : f) v = u(rng);
    double br = 0, bf = 0, g = 0;
    for (double v : r) br += bce(v, 1);
    for (double v : f) {
      bf += bce(v, 0);
      g += bce(v, 1);
    }
    const auto l = adversarial_losses(r, f, Objective::nonsaturating);
    CHECK(std::abs(l.loss_d - (br / r.size() + bf / f.size())) < 1e-12);
    CHECK(std::abs(l.loss_g - g / f.size()) < 1e-12);
  }

  // A perfect discriminator drives loss_d to the clamp floor.
  const std::vector<double> one(4, 1.0), zero(4, 0.0);
  CHECK(adversarial_losses(one, zero, Objective::nonsaturating).loss_d < 1e-6);
  CHECK(std::isfinite(adversarial_losses(zero, one, Objective::nonsaturating).loss_d));
  CHECK_THROWS_AS(adversarial_losses({}, half, Objective::nonsaturating), ValueError);
}

TEST_CASE("generator_loss matches the scalar formulas") {
  Tensor<double> p({3, 1}, std::vector<double>{0.2, 0.5, 0.9});
  const auto ns = generator_loss(Var<double>(p), Objective::nonsaturating).value()[0];
  const auto sat = generator_loss(Var<double>(p), Objective::saturating).value()[0];
  double want_ns = 0, want_sat = 0;
  for (double v : p.vec()) {
    want_ns += -std::log(v);
    want_sat += std::log(1 - v);
  }
  CHECK(std::abs(ns - want_ns / 3) < 1e-12);
  CHECK(std::abs(sat - want_sat / 3) < 1e-12);
}

TEST_CASE("composed generator and discriminator gradients") {
  GeneratorConfig gc;
  gc.base_channels = 8;
  gc.channels = {6, 4, 4, 3};
  gc.label_classes = 2;
  DiscriminatorConfig dc;
  dc.channels = {4, 4, 6, 8};
  dc.num_classes = 2;
  dc.label_classes = 2;
  Generator<double> g(gc);
  Discriminator<double> d(dc);
  Rng rng(1);
  nn::init_weights(g.store(), 0.3, rng);
  nn::init_weights(d.store(), 0.3, rng);
  const auto z = sample_noise<double>(3, rng);
  const std::vector<int> lab{0, 1, 1};
  auto loss = [&] {
    auto out = d.forward(g.forward(z, lab, Mode::train), lab, Mode::train);
    return ad::add(generator_loss(out.adv_prob, Objective::nonsaturating),
                   ad::softmax_cross_entropy(out.class_logits, ad::one_hot<double>(lab, 2)));
  };
  ad::GradCheckOptions opt;
  opt.coords_per_param = 4;
  opt.seed = 3;
  auto params = g.store().parameters();
  for (const auto& p : d.store().parameters()) params.push_back(p);
  CHECK(ad::grad_check(loss, params, opt) < 1e-4);
}

TEST_CASE("per_class training yields one generator per non-empty class") {
  data::CorpusOptions o;
  o.counts = {2, 2, 2, 2, 2, 2, 2, 2};
  o.seed = 1;
  const auto ds = data::generate_corpus(o);
  auto cfg = quick_config(2);
  cfg.batch_size = 2;
  const auto gens = train_gans(ds, 8, cfg);
  REQUIRE(gens.size() == 8);
  for (std::size_t c = 0; c < 8; ++c) {
    CHECK(gens[c].target_class == static_cast<int>(c));
    CHECK(gens[c].history.size() == 1);
  }

  data::CorpusOptions partial;
  partial.counts = {3, 0, 3, 0, 0, 0, 0, 0};
  const auto sparse = train_gans(data::generate_corpus(partial), 8, cfg);
  REQUIRE(sparse.size() == 2);
  CHECK(sparse[1].target_class == 2);
  CHECK_THROWS_AS(train_cgan(ds, std::nullopt, 8, cfg), ValueError);
}

TEST_CASE("training history is finite and reproducible") {
  const auto ds = tiny_corpus(8, 3);
  auto cfg = quick_config(11);
  cfg.epochs = 2;
  const auto a = train_cgan(ds, 1, 2, cfg);
  const auto b = train_cgan(ds, 1, 2, cfg);
  CHECK(a.history.size() == 4);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(std::isfinite(a.history.loss_d[i]));
    CHECK(std::isfinite(a.history.loss_g[i]));
    CHECK(a.history.d_real[i] > 0);
    CHECK(a.history.d_fake[i] < 1);
  }
  CHECK(a.history.loss_d == b.history.loss_d);
  CHECK(a.history.loss_g == b.history.loss_g);

  cfg.seed = 12;
  CHECK(train_cgan(ds, 1, 2, cfg).history.loss_d != a.history.loss_d);
  cfg.epochs = 0;
  CHECK_THROWS_AS(train_cgan(ds, 1, 2, cfg), ValueError);
}

TEST_CASE("conditional mode trains one shared generator") {
  const auto ds = tiny_corpus(4, 4);
  auto cfg = quick_config(5);
  cfg.mode = TrainMode::conditional;
  const auto gens = train_gans(ds, 2, cfg);
  REQUIRE(gens.size() == 1);
  CHECK_FALSE(gens[0].target_class.has_value());
  const auto syn = synthesize(gens, 3, 2, 9);
  CHECK(syn.size() == 6);
  CHECK(syn.class_counts()[0] == 3);
  CHECK(syn.class_counts()[1] == 3);
}

TEST_CASE("synthesize labels, seeds and independence of batch composition") {
  Generator<float> g(GeneratorConfig::for_profile(Profile::desk));
  Rng rng(8);
  nn::init_weights(g.store(), 0.02, rng);
  const auto big = synthesize(g, 500, 5, 77);
  REQUIRE(big.size() == 500);
  for (const auto& im : big.images) {
    CHECK(im.class_label == 5);
    CHECK(im.patient_id == -1);
    CHECK(im.provenance == data::Provenance::synthesized);
  }
  CHECK(big.images[0].image != big.images[1].image);

  // Eval mode: image i does not depend on chunking or on n.
  const auto small = synthesize(g, 3, 5, 77, kSynthesisMode, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& pa = small.images[i].image.pixels;
    const auto& pb = big.images[i].image.pixels;
    int worst = 0;
    for (std::size_t j = 0; j < pa.size(); ++j) worst = std::max(worst, std::abs(int(pa[j]) - int(pb[j])));
    CHECK(worst <= 1);
    CHECK(small.images[i].seed == big.images[i].seed);
  }
  CHECK(synthesize(g, 2, 5, 78).images[0].image != big.images[0].image);
  CHECK_THROWS_AS(synthesize(g, 0, 5, 77), ValueError);
}

TEST_CASE("profiles and enum parsing") {
  CHECK(parse_profile("desk") == Profile::desk);
  CHECK(parse_profile("full") == Profile::full);
  CHECK_THROWS_AS(parse_profile("huge"), ValueError);
  CHECK(parse_objective(to_string(Objective::saturating)) == Objective::saturating);
  CHECK(parse_train_mode(to_string(TrainMode::conditional)) == TrainMode::conditional);
  CHECK(GeneratorConfig::for_profile(Profile::full).base_channels == 1024);
  CHECK(DiscriminatorConfig::for_profile(Profile::full, 8).channels.back() == 1024);
  CHECK(GanTrainConfig::for_profile(Profile::desk).batch_size == 2);
  CHECK(GanTrainConfig::for_profile(Profile::full).batch_size == 32);
}
