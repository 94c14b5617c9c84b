#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "topogan/error.hpp"
#include "topogan/metrics.hpp"

using namespace topogan;
using namespace topogan::metrics;

namespace {

// Direct per-window evaluation with an explicit 2-D Gaussian.
double naive_ssim(const std::vector<double>& a, const std::vector<double>& b, std::size_t h, std::size_t w) {
  const int win = 11;
  const double sigma = 1.5, c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  std::vector<double> k(win * win);
  double ks = 0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double di = i - 5, dj = j - 5;
      k[i * win + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      ks += k[i * win + j];
    }
  for (auto& v : k) v /= ks;
  double total = 0;
  std::size_t m = 0;
  for (std::size_t y = 0; y + win <= h; ++y)
    for (std::size_t x = 0; x + win <= w; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          ma += k[i * win + j] * a[(y + i) * w + x + j];
          mb += k[i * win + j] * b[(y + i) * w + x + j];
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double da = a[(y + i) * w + x + j] - ma, db = b[(y + i) * w + x + j] - mb;
          va += k[i * win + j] * da * da;
          vb += k[i * win + j] * db * db;
          cov += k[i * win + j] * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++m;
    }
  return total / static_cast<double>(m);
}

data::Image random_image(std::mt19937_64& rng) {
  data::Image im;
  std::uniform_int_distribution<int> u(0, 255);
  for (auto& p : im.pixels) p = static_cast<std::uint8_t>(u(rng));
  return im;
}

data::Image constant_image(std::uint8_t v) {
  data::Image im;
  im.pixels.assign(data::kPixelCount, v);
  return im;
}

}  // namespace

TEST_CASE("confusion matrix") {
  const std::vector<int> y{0, 1, 2, 2, 1};
  auto cm = confusion_matrix(y, y, 3);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t p = 0; p < 3; ++p) CHECK((t == p ? cm.at(t, p) > 0 : cm.at(t, p) == 0));
  CHECK(confusion_matrix({}, {}, 4).total() == 0);
  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{3}, std::vector<int>{0}, 3), ValueError);
  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{0, 1}, std::vector<int>{0}, 3), ValueError);

  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> lab(0, 7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> pred(100), truth(100);
    for (int i = 0; i < 100; ++i) pred[i] = lab(rng), truth[i] = lab(rng);
    const auto m = confusion_matrix(pred, truth, 8);
    for (int t = 0; t < 8; ++t)
      for (int p = 0; p < 8; ++p) {
        std::uint64_t n = 0;
        for (int i = 0; i < 100; ++i) n += truth[i] == t && pred[i] == p;
        CHECK(m.at(t, p) == n);
      }
    CHECK(m.total() == 100);
    // One-vs-rest counts against brute force.
    for (int c = 0; c < 8; ++c) {
      BinaryCounts bf;
      for (int i = 0; i < 100; ++i) {
        const bool pt = truth[i] == c, pp = pred[i] == c;
        bf.tp += pt && pp;
        bf.fn += pt && !pp;
        bf.fp += !pt && pp;
        bf.tn += !pt && !pp;
      }
      const auto b = binary_counts(m, c);
      CHECK(b.tp == bf.tp);
      CHECK(b.fp == bf.fp);
      CHECK(b.fn == bf.fn);
      CHECK(b.tn == bf.tn);
      CHECK(b.total() == 100);
      CHECK(accuracy(b).value == static_cast<double>(bf.tp + bf.tn) / 100.0);
      if (!precision(b).degenerate) CHECK(precision(b).value == static_cast<double>(bf.tp) / (bf.tp + bf.fp));
      if (!recall(b).degenerate) CHECK(recall(b).value == static_cast<double>(bf.tp) / (bf.tp + bf.fn));
      if (!f1(b).degenerate) CHECK(f1(b).value == 2.0 * bf.tp / (2.0 * bf.tp + bf.fp + bf.fn));
    }
  }
}

TEST_CASE("binary reduction by hand") {
  ConfusionMatrix cm{2, {3, 1, 2, 4}};
  const auto b = binary_counts(cm, 1);
  CHECK(b.tp == 4);
  CHECK(b.fp == 1);
  CHECK(b.fn == 2);
  CHECK(b.tn == 3);
}

TEST_CASE("closed-form scores") {
  BinaryCounts b{9, 9, 1, 1};
  CHECK(accuracy(b).value == doctest::Approx(0.9));
  CHECK(precision(b).value == doctest::Approx(0.9));
  CHECK(recall(b).value == doctest::Approx(0.9));
  CHECK(f1(b).value == doctest::Approx(0.9));
  BinaryCounts c{2, 0, 1, 1};
  CHECK(f1(c).value == doctest::Approx(4.0 / 6.0));
  BinaryCounts d{0, 5, 0, 3};
  CHECK(precision(d).value == 0.0);
  CHECK(precision(d).degenerate);
  CHECK_FALSE(recall(d).degenerate);
  CHECK(accuracy(BinaryCounts{}).degenerate);
}

TEST_CASE("property: f1 is the harmonic mean of precision and recall") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> u(0, 50);
  for (int i = 0; i < 1000; ++i) {
    BinaryCounts b{std::uint64_t(u(rng)), std::uint64_t(u(rng)), std::uint64_t(u(rng)), std::uint64_t(u(rng))};
    const double p = precision(b).value, r = recall(b).value;
    if (p > 0 && r > 0) CHECK(std::abs(f1(b).value - 2 * p * r / (p + r)) < 1e-12);
  }
}

TEST_CASE("macro metrics") {
  ConfusionMatrix diag{3, {5, 0, 0, 0, 7, 0, 0, 0, 2}};
  const auto m = macro_metrics(diag);
  CHECK(m.accuracy == 1.0);
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.f1 == 1.0);

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> lab(0, 7);
  std::vector<int> pred(10000), truth(10000);
  for (int i = 0; i < 10000; ++i) pred[i] = lab(rng), truth[i] = lab(rng);
  const auto cm = confusion_matrix(pred, truth, 8);
  const auto chance = macro_metrics(cm);
  CHECK(std::abs(chance.accuracy - 0.125) < 0.02);

  // Relabeling classes consistently leaves every macro value unchanged.
  const int perm[8] = {3, 7, 0, 5, 1, 6, 2, 4};
  for (int i = 0; i < 10000; ++i) pred[i] = perm[pred[i]], truth[i] = perm[truth[i]];
  const auto permuted = macro_metrics(confusion_matrix(pred, truth, 8));
  CHECK(permuted.accuracy == chance.accuracy);
  CHECK(permuted.precision == doctest::Approx(chance.precision).epsilon(1e-14));
  CHECK(permuted.recall == doctest::Approx(chance.recall).epsilon(1e-14));
  CHECK(permuted.f1 == doctest::Approx(chance.f1).epsilon(1e-14));
  for (double v : {chance.accuracy, chance.precision, chance.recall, chance.f1}) CHECK((v >= 0 && v <= 1));
}

TEST_CASE("mse and psnr") {
  std::mt19937_64 rng(4);
  const auto z = constant_image(0), f = constant_image(255);
  CHECK(mse(z, z) == 0.0);
  CHECK(mse(z, f) == 65025.0);
  CHECK(psnr(z, f) == doctest::Approx(0.0));
  CHECK(std::isinf(psnr(f, f)));
  CHECK(psnr_from_mse(65.025) == doctest::Approx(30.0).epsilon(1e-12));
  std::vector<std::uint8_t> small(5);
  CHECK_THROWS_AS(mse(small, z.pixels), ShapeError);

  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_image(rng), b = random_image(rng);
    double s = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) s += std::pow(double(a.pixels[i]) - double(b.pixels[i]), 2);
    s /= static_cast<double>(a.pixels.size());
    CHECK(std::abs(mse(a, b) - s) < 1e-12);
    CHECK(mse(a, b) == mse(b, a));
    CHECK(std::abs(psnr(a, b) - 10 * std::log10(65025.0 / s)) < 1e-12);
    CHECK(psnr(a, b) == psnr(b, a));
  }
  double prev = std::numeric_limits<double>::infinity();
  for (double m = 0.5; m < 70000; m *= 1.7) {
    CHECK(psnr_from_mse(m) < prev);
    prev = psnr_from_mse(m);
  }
}

TEST_CASE("ssim identities and constant windows") {
  std::mt19937_64 rng(5);
  const auto a = random_image(rng);
  CHECK(ssim(a, a) == 1.0);
  const double c1 = std::pow(0.01 * 255, 2);
  const double expect = c1 / (65025 + c1);
  CHECK(ssim(constant_image(255), constant_image(0)) == doctest::Approx(expect).epsilon(1e-9));
  CHECK(std::abs(expect - 1.0e-4) < 1e-6);

  std::vector<double> tiny(10 * 10);
  CHECK_THROWS_AS(ssim_plane(tiny, tiny, 10, 10), ShapeError);
}

TEST_CASE("ssim matches the naive sliding window") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 255);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(32 * 32), b(32 * 32);
    for (auto& v : a) v = u(rng);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = trial % 2 ? u(rng) : std::clamp(a[i] + 30 * (u(rng) / 255 - 0.5), 0.0, 255.0);
    const double fast = ssim_plane(a, b, 32, 32);
    CHECK(std::abs(fast - naive_ssim(a, b, 32, 32)) < 1e-9);
    CHECK(std::abs(fast - ssim_plane(b, a, 32, 32)) < 1e-12);
    CHECK((fast >= -1 && fast <= 1));
  }
  // Colour images go through luminance.
  const auto x = random_image(rng), y = random_image(rng);
  CHECK(std::abs(ssim(x, y) - naive_ssim(luminance(x), luminance(y), 64, 64)) < 1e-9);
}

TEST_CASE("luminance weights") {
  data::Image im;
  im.at(0, 0, 0) = 100;
  im.at(0, 0, 1) = 50;
  im.at(0, 0, 2) = 200;
  CHECK(luminance(im)[0] == doctest::Approx(0.299 * 100 + 0.587 * 50 + 0.114 * 200));
}

TEST_CASE("fid closed forms") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01(0, 1);
  const std::size_t n = 10000, e = 4;
  const double mu_r[e] = {0, 1, -2, 0.5}, mu_f[e] = {0.3, 1, -1, 0.5};
  const double var_r[e] = {1, 2, 0.5, 3}, var_f[e] = {1.5, 2, 0.2, 1};
  Tensor<double> r({n, e}), f({n, e});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < e; ++j) {
      r[i * e + j] = mu_r[j] + std::sqrt(var_r[j]) * n01(rng);
      f[i * e + j] = mu_f[j] + std::sqrt(var_f[j]) * n01(rng);
    }
  CHECK(fid(r, r) < 1e-6);

  // Diagonal closed form evaluated on the sample moments of the draws; the
  // off-diagonal sample covariance is O(1/sqrt(N)) and enters at second order.
  double closed = 0;
  for (std::size_t j = 0; j < e; ++j) {
    double mr = 0, mf = 0;
    for (std::size_t i = 0; i < n; ++i) mr += r[i * e + j], mf += f[i * e + j];
    mr /= n, mf /= n;
    double vr = 0, vf = 0;
    for (std::size_t i = 0; i < n; ++i) vr += std::pow(r[i * e + j] - mr, 2), vf += std::pow(f[i * e + j] - mf, 2);
    vr /= n - 1, vf /= n - 1;
    closed += std::pow(mr - mf, 2) + std::pow(std::sqrt(vr) - std::sqrt(vf), 2);
  }
  const double d = fid(r, f);
  MESSAGE("fid " << d << " closed form " << closed);
  CHECK(std::abs(d - closed) < 1e-3);
  CHECK(std::abs(d - fid(f, r)) < 1e-9);

  Tensor<double> rs = r, fs = f;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < e; ++j) rs[i * e + j] += 3.0 * j - 1, fs[i * e + j] += 3.0 * j - 1;
  CHECK(std::abs(fid(rs, fs) - d) < 1e-9);

  CHECK_THROWS_AS(fid(Tensor<double>({1, e}), f), ValueError);
  CHECK_THROWS_AS(fid(r, Tensor<double>({5, e + 1})), ShapeError);
}

TEST_CASE("property: fid is nonnegative and symmetric") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01(0, 1);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t na = 3 + trial, nb = 5 + 2 * trial, e = 1 + trial % 6;
    Tensor<double> a({na, e}), b({nb, e});
    for (auto& v : a.vec()) v = n01(rng);
    for (auto& v : b.vec()) v = 2 * n01(rng) + 0.1 * trial;
    const double d = fid(a, b);
    CHECK(d >= 0);
    CHECK(std::abs(d - fid(b, a)) < 1e-9 * std::max(1.0, d));
  }
}
