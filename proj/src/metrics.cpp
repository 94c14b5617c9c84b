#include "topogan/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numeric>

#include "topogan/error.hpp"

namespace topogan::metrics {

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

ConfusionMatrix confusion_matrix(std::span<const int> pred, std::span<const int> truth, std::size_t k) {
  if (pred.size() != truth.size())
    throw ValueError("confusion_matrix: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " labels");
  ConfusionMatrix cm{k, std::vector<std::uint64_t>(k * k, 0)};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || truth[i] < 0 || static_cast<std::size_t>(pred[i]) >= k ||
        static_cast<std::size_t>(truth[i]) >= k)
      throw ValueError("confusion_matrix: label outside [0, " + std::to_string(k) + ")");
    cm.counts[static_cast<std::size_t>(truth[i]) * k + static_cast<std::size_t>(pred[i])]++;
  }
  return cm;
}

BinaryCounts binary_counts(const ConfusionMatrix& cm, std::size_t c) {
  if (c >= cm.k) throw ValueError("binary_counts: class out of range");
  BinaryCounts b;
  std::uint64_t row = 0, col = 0;
  for (std::size_t j = 0; j < cm.k; ++j) {
    row += cm.at(c, j);
    col += cm.at(j, c);
  }
  b.tp = cm.at(c, c);
  b.fp = col - b.tp;
  b.fn = row - b.tp;
  b.tn = cm.total() - b.tp - b.fp - b.fn;
  return b;
}

namespace {

Score ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return {0.0, true};
  return {static_cast<double>(num) / static_cast<double>(den), false};
}

}  // namespace

Score accuracy(const BinaryCounts& b) { return ratio(b.tp + b.tn, b.total()); }
Score precision(const BinaryCounts& b) { return ratio(b.tp, b.tp + b.fp); }
Score recall(const BinaryCounts& b) { return ratio(b.tp, b.tp + b.fn); }
Score f1(const BinaryCounts& b) { return ratio(2 * b.tp, 2 * b.tp + b.fp + b.fn); }

MacroMetrics macro_metrics(const ConfusionMatrix& cm) {
  MacroMetrics m;
  const auto total = cm.total();
  if (total == 0 || cm.k == 0) {
    m.degenerate = 3 * cm.k + 1;
    return m;
  }
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < cm.k; ++c) trace += cm.at(c, c);
  m.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  for (std::size_t c = 0; c < cm.k; ++c) {
    const auto b = binary_counts(cm, c);
    for (auto [s, acc] : {std::pair{precision(b), &m.precision}, {recall(b), &m.recall}, {f1(b), &m.f1}}) {
      *acc += s.value;
      m.degenerate += s.degenerate;
    }
  }
  const double k = static_cast<double>(cm.k);
  m.precision /= k;
  m.recall /= k;
  m.f1 /= k;
  return m;
}

double mse(std::span<const std::uint8_t> f, std::span<const std::uint8_t> g) {
  if (f.size() != g.size() || f.empty())
    throw ShapeError("mse: size mismatch " + std::to_string(f.size()) + " vs " + std::to_string(g.size()));
  double s = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double d = static_cast<double>(f[i]) - static_cast<double>(g[i]);
    s += d * d;
  }
  return s / static_cast<double>(f.size());
}

double mse(const data::Image& f, const data::Image& g) {
  if (f.width != g.width || f.height != g.height) throw ShapeError("mse: image dimensions differ");
  return mse(std::span<const std::uint8_t>(f.pixels), std::span<const std::uint8_t>(g.pixels));
}

double psnr_from_mse(double m) {
  if (m <= 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

double psnr(const data::Image& f, const data::Image& g) { return psnr_from_mse(mse(f, g)); }

std::vector<double> gaussian_taps(const SsimParams& p) {
  if (p.window == 0 || !(p.sigma > 0)) throw ValueError("ssim: window and sigma must be positive");
  std::vector<double> taps(p.window);
  const double c = (static_cast<double>(p.window) - 1) / 2;
  double s = 0;
  for (std::size_t i = 0; i < p.window; ++i) {
    const double d = static_cast<double>(i) - c;
    taps[i] = std::exp(-d * d / (2 * p.sigma * p.sigma));
    s += taps[i];
  }
  for (auto& t : taps) t /= s;
  return taps;
}

std::vector<double> luminance(const data::Image& image) {
  std::vector<double> out(image.width * image.height);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 0.299 * image.pixels[i * 3] + 0.587 * image.pixels[i * 3 + 1] + 0.114 * image.pixels[i * 3 + 2];
  return out;
}

namespace {

// Valid-mode separable Gaussian filter.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& taps) {
  const std::size_t k = taps.size(), ow = w - k + 1, oh = h - k + 1;
  std::vector<double> tmp(h * ow), out(oh * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t j = 0; j < k; ++j) s += taps[j] * src[y * w + x + j];
      tmp[y * ow + x] = s;
    }
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t i = 0; i < k; ++i) s += taps[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim_plane(std::span<const double> a, std::span<const double> b, std::size_t height, std::size_t width,
                  const SsimParams& params) {
  if (a.size() != height * width || b.size() != height * width) throw ShapeError("ssim: plane size mismatch");
  if (height < params.window || width < params.window)
    throw ShapeError("ssim: image " + std::to_string(height) + "x" + std::to_string(width) + " is smaller than the " +
                     std::to_string(params.window) + "x" + std::to_string(params.window) + " window");
  const auto taps = gaussian_taps(params);
  const std::size_t n = height * width;
  std::vector<double> va(a.begin(), a.end()), vb(b.begin(), b.end()), aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(va, height, width, taps), mu_b = filter_valid(vb, height, width, taps);
  const auto e_aa = filter_valid(aa, height, width, taps), e_bb = filter_valid(bb, height, width, taps);
  const auto e_ab = filter_valid(ab, height, width, taps);
  const double c1 = params.c1(), c2 = params.c2();
  double total = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double var_a = e_aa[i] - ma * ma, var_b = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double ssim(const data::Image& a, const data::Image& b, const SsimParams& params) {
  if (a.width != b.width || a.height != b.height) throw ShapeError("ssim: image dimensions differ");
  const auto la = luminance(a), lb = luminance(b);
  return ssim_plane(la, lb, a.height, a.width, params);
}

namespace {

using Matrix = Eigen::MatrixXd;

void moments(const Tensor<double>& x, Eigen::VectorXd& mean, Matrix& cov) {
  const auto n = static_cast<Eigen::Index>(x.dim(0)), e = static_cast<Eigen::Index>(x.dim(1));
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(x.data(), n, e);
  mean = m.colwise().mean().transpose();
  const Matrix centered = m.rowwise() - mean.transpose();
  cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
}

Matrix psd_sqrt(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  const Eigen::VectorXd roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double fid(const Tensor<double>& real, const Tensor<double>& fake) {
  if (real.rank() != 2 || fake.rank() != 2) throw ShapeError("fid: embeddings must be N x E");
  if (real.dim(1) != fake.dim(1))
    throw ShapeError("fid: embedding widths differ (" + std::to_string(real.dim(1)) + " vs " +
                     std::to_string(fake.dim(1)) + ")");
  if (real.dim(0) < 2 || fake.dim(0) < 2) throw ValueError("fid: each set needs at least 2 rows");
  Eigen::VectorXd mr, mf;
  Matrix sr, sf;
  moments(real, mr, sr);
  moments(fake, mf, sf);
  const Matrix root = psd_sqrt(sr);
  Matrix inner = root * sf * root;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(inner, Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (mr - mf).squaredNorm() + sr.trace() + sf.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, d);
}

}  // namespace topogan::metrics
