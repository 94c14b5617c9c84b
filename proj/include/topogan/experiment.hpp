#pragma once

// Cross-validated augmentation grid, GAN quality study, timing study and the
// report they produce.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "topogan/cgan.hpp"
#include "topogan/classifier.hpp"
#include "topogan/config.hpp"
#include "topogan/metrics.hpp"

namespace topogan::exp {

inline constexpr const char* kVersion = "1.0.0";

// Non-asserted context values for the quality block.
inline constexpr double kReferenceSsim = 0.872;
inline constexpr double kReferencePsnr = 33.221;

struct MeanStd {
  double mean = 0, std = 0;  // std over folds with the n-1 denominator
};
MeanStd mean_std(const std::vector<double>& v);

struct FoldScore {
  metrics::MacroMetrics macro;
  std::size_t train_images = 0, test_images = 0;
};

struct CellResult {
  std::string variant;  // "cnn_w<width>"
  std::size_t width = 0;
  DataCondition condition = DataCondition::original;
  Balancing balancing = Balancing::none;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;  // first failure, empty when ok
  std::vector<FoldScore> folds;
  MeanStd accuracy, precision, recall, f1;
  std::size_t degenerate = 0;  // per-class scores with a zero denominator, summed over folds

  std::string descriptor() const;
};

struct QualityResult {
  std::size_t n = 0;
  double ssim = 0, psnr = 0, mse = 0, fid = 0;
  std::size_t fid_classes = 0;        // classes averaged into fid
  std::vector<int> skipped_classes;   // no real images (or too few for FID)
  // (generated index, real index) nearest pairs in the inputs' orders.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

struct AttRow {
  std::string variant;
  std::size_t width = 0, parameters = 0;
  clf::AttResult att;
};

struct ExperimentReport {
  std::uint64_t master_seed = 0;
  std::string profile, version = kVersion;
  std::size_t num_classes = 0, cv_folds = 0, corpus_images = 0;
  std::vector<CellResult> cells;
  bool has_quality = false;
  QualityResult quality;
};

// Everything but ATT (wall-clock) is a function of the config alone.
struct RunArtifacts {
  ExperimentReport report;
  std::vector<gan::TrainedGenerator> quality_generators;  // fold-0 GANs
  data::Dataset quality_real, quality_generated;
  std::vector<AttRow> att;
};

using Progress = std::function<void(const std::string&)>;

// Splits, optionally balances, trains GANs on training folds only, trains
// one classifier per (width, condition, balancing) cell and fold, scores the
// test folds. A failing cell is recorded and the others continue.
RunArtifacts run_experiment(const ExperimentConfig& cfg, const Progress& progress = {});

// Re-runs a single cell; equal to the cell run_experiment produced.
CellResult run_cell(const ExperimentConfig& cfg, std::size_t width, DataCondition condition, Balancing balancing,
                    const Progress& progress = {});

// Pairs every generated image with the nearest real image of its class by
// MSE and averages SSIM / PSNR / MSE; FID per class on `embed` features,
// averaged over classes with >= 2 images on both sides.
QualityResult quality_study(const data::Dataset& generated, const data::Dataset& real,
                            const std::function<Tensor<double>(const data::Dataset&)>& embed,
                            const Progress& warn = {});

// n images spread evenly over the classes the generators cover.
data::Dataset sample_for_quality(const std::vector<gan::TrainedGenerator>& gens, std::size_t n, std::size_t num_classes,
                                 std::uint64_t seed);

// One row per width; needs at least 100 images.
std::vector<AttRow> timing_study(const std::vector<std::size_t>& widths, std::size_t num_classes,
                                 const data::Dataset& images, std::size_t repetitions, std::uint64_t seed);

// ---- emission

// Column order of report.csv.
const std::vector<std::string>& report_columns();
std::string report_csv(const ExperimentReport& r);
std::vector<CellResult> parse_report_csv(const std::string& text);
std::string report_json(const ExperimentReport& r);
std::string quality_csv(const QualityResult& q);
// variant,width,parameters,att_mean_s,att_std_s with 4 decimals.
std::string att_csv(const std::vector<AttRow>& rows);

// Writes report.*, quality.csv, config.resolved.txt and, with png enabled,
// grid_generated.png, grid_pairs.png and gan_losses.png into cfg.output_dir.
void emit(const ExperimentConfig& cfg, const RunArtifacts& run);

// Generated samples: one row per class (up to `per_row` images, blank when a
// class has none).
data::Image grid_generated(const data::Dataset& generated, std::size_t num_classes, std::size_t per_row = 8);
// Rows of (real | generated) pairs.
data::Image grid_pairs(const data::Dataset& generated, const data::Dataset& real,
                       const std::vector<std::pair<std::size_t, std::size_t>>& pairs, std::size_t max_rows = 8);
// One panel per GAN run: loss_d (red) and loss_g (blue) against iteration.
data::Image plot_losses(const std::vector<gan::GanHistory>& runs);

}  // namespace topogan::exp
