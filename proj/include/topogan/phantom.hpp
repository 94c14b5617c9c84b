#pragma once

// Parametric stand-in for a corneal-topography corpus: four map types in
// normal/abnormal condition, rendered at 64x64 RGB through a fixed colormap,
// grouped into synthetic patients.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "topogan/rng.hpp"
#include "topogan/tensor.hpp"

namespace topogan::data {

inline constexpr std::size_t kImageSize = 64;
inline constexpr std::size_t kChannels = 3;
inline constexpr std::size_t kNumClasses = 8;
inline constexpr std::size_t kPixelCount = kImageSize * kImageSize * kChannels;

enum class MapType { sagittal = 0, corneal_thickness = 1, elevation_front = 2, elevation_back = 3 };
enum class Condition { normal = 0, abnormal = 1 };
enum class Provenance { real_phantom, synthesized };

std::string to_string(MapType m);
std::string to_string(Condition c);
std::string to_string(Provenance p);
MapType parse_map_type(const std::string& s);
Condition parse_condition(const std::string& s);
Provenance parse_provenance(const std::string& s);

// label = 2 * map_type + condition
constexpr int class_label(MapType m, Condition c) { return 2 * static_cast<int>(m) + static_cast<int>(c); }
constexpr MapType label_map_type(int label) { return static_cast<MapType>(label / 2); }
constexpr Condition label_condition(int label) { return static_cast<Condition>(label % 2); }
std::string class_name(int label);

// 8-bit RGB image, interleaved H x W x 3.
struct Image {
  std::size_t width = kImageSize;
  std::size_t height = kImageSize;
  std::vector<std::uint8_t> pixels = std::vector<std::uint8_t>(kPixelCount, 0);

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * kChannels + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * kChannels + c]; }
  bool operator==(const Image&) const = default;
};

struct LabeledImage {
  Image image;
  int class_label = 0;
  int patient_id = 0;
  Provenance provenance = Provenance::real_phantom;
  std::uint64_t seed = 0;
};

struct Dataset {
  std::vector<LabeledImage> images;

  std::size_t size() const { return images.size(); }
  std::array<std::size_t, kNumClasses> class_counts() const;
  // Sorted, unique patient ids.
  std::vector<int> patients() const;
  std::vector<int> labels() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset of_class(int label) const;
  void append(const Dataset& other);
};

// Lesion amplitudes of normal eyes stay below this value; abnormal ones sit
// above it by at least half the separability margin.
inline constexpr double kLesionThreshold = 0.2;
inline constexpr double kDefaultMargin = 0.2;

struct PhantomParams {
  MapType map_type = MapType::sagittal;
  Condition condition = Condition::normal;
  int patient_id = 0;
  double severity = 0.0;           // [0, 1]
  double apex_dx = 0.0, apex_dy = 0.0;  // lesion offset from centre, pixels
  double lesion_amplitude = 0.0;   // colormap units
  double lesion_sigma = 6.0;       // pixels
  double bowtie_angle = 0.0;       // radians
  double base_curvature = 0.0;     // per-eye offset of the base field
  double noise_std = 0.01;         // per-pixel field noise
};

// Draws per-eye parameters for (map, condition); amplitudes obey the
// threshold/margin rule above.
PhantomParams sample_params(MapType m, Condition c, int patient_id, double margin, Rng& rng);

// Deterministic render given (params, seed).
LabeledImage generate_phantom(const PhantomParams& params, std::uint64_t seed);

// Scalar field before colour mapping, in [0, 1] inside the cornea disc and
// NaN outside it; no noise.
std::vector<double> render_field(const PhantomParams& params);

std::array<std::uint8_t, 3> colormap(double value);

struct CorpusOptions {
  std::array<std::size_t, kNumClasses> counts{248, 460, 338, 548, 765, 167, 693, 229};
  std::uint64_t seed = 0;
  double margin = kDefaultMargin;
};

Dataset generate_corpus(const CorpusOptions& opts);

// Repeats random same-class images until every non-empty class in
// [0, num_classes) matches the largest. All classes empty is an error.
Dataset oversample(const Dataset& dataset, Rng& rng, std::size_t num_classes = kNumClasses);
// Keeps a uniform random subset of every class in [0, num_classes), sized to
// the smallest class. An empty class is an error.
Dataset undersample(const Dataset& dataset, Rng& rng, std::size_t num_classes = kNumClasses);

struct Fold {
  std::vector<std::size_t> train;  // image indices
  std::vector<std::size_t> test;
  std::vector<int> test_patients;
};

// Patient-level k-fold partition: patient groups differ in size by at most one.
std::vector<Fold> kfold_patient_split(const Dataset& dataset, std::size_t k, std::uint64_t seed);

// Splits by patient into (train, holdout) with roughly `fraction` of the
// patients held out (at least one when there are two or more patients).
std::pair<Dataset, Dataset> patient_holdout(const Dataset& dataset, double fraction, std::uint64_t seed);

// x / 127.5 - 1 into an N x 3 x 64 x 64 batch.
template <typename T>
Tensor<T> normalize(std::span<const Image> images);
template <typename T>
Tensor<T> normalize(const Dataset& dataset);
// Inverse map; rounds to nearest and clamps to [0, 255].
template <typename T>
std::vector<Image> denormalize(const Tensor<T>& batch);

// Per-map binary task: keeps images of one map type, label = condition.
Dataset binary_task(const Dataset& dataset, MapType map);

}  // namespace topogan::data
