#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "topogan/phantom.hpp"
#include "topogan/tensor.hpp"

namespace topogan::metrics {

// Rows are the true class, columns the predicted class.
struct ConfusionMatrix {
  std::size_t k = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * k + pred]; }
  std::uint64_t total() const;
};

ConfusionMatrix confusion_matrix(std::span<const int> pred, std::span<const int> truth, std::size_t k);

struct BinaryCounts {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::uint64_t total() const { return tp + tn + fp + fn; }
};

// One-vs-rest reduction for class c.
BinaryCounts binary_counts(const ConfusionMatrix& cm, std::size_t c);

// A zero denominator yields value 0 with degenerate set.
struct Score {
  double value = 0;
  bool degenerate = false;
};

Score accuracy(const BinaryCounts& b);
Score precision(const BinaryCounts& b);
Score recall(const BinaryCounts& b);
Score f1(const BinaryCounts& b);

struct MacroMetrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  // Number of per-class scores that hit a zero denominator.
  std::size_t degenerate = 0;
};

// Accuracy from the trace; precision/recall/F1 as unweighted class means.
MacroMetrics macro_metrics(const ConfusionMatrix& cm);

double mse(std::span<const std::uint8_t> f, std::span<const std::uint8_t> g);
double mse(const data::Image& f, const data::Image& g);
// +infinity when the images are identical.
double psnr(const data::Image& f, const data::Image& g);
double psnr_from_mse(double mse);

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01, k2 = 0.03;
  double dynamic_range = 255.0;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_taps(const SsimParams& params);

// 0.299 R + 0.587 G + 0.114 B, row-major.
std::vector<double> luminance(const data::Image& image);

// Mean over all valid stride-1 windows of a single-channel image pair.
double ssim_plane(std::span<const double> a, std::span<const double> b, std::size_t height, std::size_t width,
                  const SsimParams& params = {});
double ssim(const data::Image& a, const data::Image& b, const SsimParams& params = {});

// Frechet distance between Gaussians fitted to two N x E embedding sets.
double fid(const Tensor<double>& real, const Tensor<double>& fake);

}  // namespace topogan::metrics
