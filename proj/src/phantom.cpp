#include "topogan/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "topogan/error.hpp"

namespace topogan::data {

namespace {

constexpr double kCenter = (kImageSize - 1) / 2.0;
constexpr double kRadius = 30.0;

// blue -> green -> yellow -> red
constexpr std::array<std::array<double, 3>, 8> kAnchors{{
    {0, 0, 128},
    {0, 64, 255},
    {0, 170, 255},
    {0, 200, 120},
    {60, 220, 0},
    {255, 255, 0},
    {255, 140, 0},
    {200, 0, 0},
}};

// Signed lesion direction per map: steepening on curvature maps, thinning on
// pachymetry, raised islands on elevation maps.
double lesion_sign(MapType m) { return m == MapType::corneal_thickness ? -1.0 : 1.0; }

}  // namespace

std::string to_string(MapType m) {
  switch (m) {
    case MapType::sagittal: return "sagittal";
    case MapType::corneal_thickness: return "corneal_thickness";
    case MapType::elevation_front: return "elevation_front";
    case MapType::elevation_back: return "elevation_back";
  }
  return "?";
}

std::string to_string(Condition c) { return c == Condition::normal ? "normal" : "abnormal"; }
std::string to_string(Provenance p) { return p == Provenance::real_phantom ? "real_phantom" : "synthesized"; }

MapType parse_map_type(const std::string& s) {
  for (int i = 0; i < 4; ++i)
    if (to_string(static_cast<MapType>(i)) == s) return static_cast<MapType>(i);
  throw ValueError("unknown map type '" + s + "'");
}

Condition parse_condition(const std::string& s) {
  if (s == "normal") return Condition::normal;
  if (s == "abnormal") return Condition::abnormal;
  throw ValueError("unknown condition '" + s + "'");
}

Provenance parse_provenance(const std::string& s) {
  if (s == "real_phantom") return Provenance::real_phantom;
  if (s == "synthesized") return Provenance::synthesized;
  throw ValueError("unknown provenance '" + s + "'");
}

std::string class_name(int label) {
  static const char* kNames[] = {"Normal_Sagittal",        "Abnormal_Sagittal",        "Normal_CornealThickness",
                                 "Abnormal_CornealThickness", "Normal_ElevationFront",   "Abnormal_ElevationFront",
                                 "Normal_ElevationBack",   "Abnormal_ElevationBack"};
  if (label < 0 || label >= static_cast<int>(kNumClasses)) return "class" + std::to_string(label);
  return kNames[label];
}

std::array<std::size_t, kNumClasses> Dataset::class_counts() const {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& im : images) counts.at(static_cast<std::size_t>(im.class_label))++;
  return counts;
}

std::vector<int> Dataset::patients() const {
  std::set<int> ids;
  for (const auto& im : images) ids.insert(im.patient_id);
  return {ids.begin(), ids.end()};
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(im.class_label);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.images.reserve(indices.size());
  for (auto i : indices) out.images.push_back(images.at(i));
  return out;
}

Dataset Dataset::of_class(int label) const {
  Dataset out;
  for (const auto& im : images)
    if (im.class_label == label) out.images.push_back(im);
  return out;
}

void Dataset::append(const Dataset& other) {
  images.insert(images.end(), other.images.begin(), other.images.end());
}

PhantomParams sample_params(MapType m, Condition c, int patient_id, double margin, Rng& rng) {
  if (margin < 0 || margin >= 2 * kLesionThreshold) throw ValueError("phantom margin must lie in [0, 0.4)");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  PhantomParams p;
  p.map_type = m;
  p.condition = c;
  p.patient_id = patient_id;
  p.severity = u01(rng);
  p.apex_dx = -6.0 + 12.0 * u01(rng);
  p.apex_dy = 4.0 + 8.0 * u01(rng);  // inferior displacement
  p.lesion_sigma = 5.0 + 4.0 * u01(rng);
  p.bowtie_angle = std::numbers::pi * u01(rng);
  p.base_curvature = -1.0 + 2.0 * u01(rng);
  const double lo = kLesionThreshold - margin / 2;
  const double hi = kLesionThreshold + margin / 2;
  p.lesion_amplitude = c == Condition::normal ? p.severity * lo : hi + 0.3 * p.severity;
  return p;
}

std::vector<double> render_field(const PhantomParams& p) {
  std::vector<double> field(kImageSize * kImageSize, std::numeric_limits<double>::quiet_NaN());
  const double lx = kCenter + p.apex_dx, ly = kCenter + p.apex_dy;
  const double s2 = 2 * p.lesion_sigma * p.lesion_sigma;
  for (std::size_t y = 0; y < kImageSize; ++y) {
    for (std::size_t x = 0; x < kImageSize; ++x) {
      const double u = (x - kCenter) / kRadius, v = (y - kCenter) / kRadius;
      const double r2 = u * u + v * v;
      if (r2 > 1.0) continue;
      const double theta = std::atan2(v, u);
      const double astig = std::cos(2 * (theta - p.bowtie_angle));
      double f = 0;
      switch (p.map_type) {
        case MapType::sagittal:
          f = 0.42 + 0.05 * p.base_curvature - 0.10 * r2 + 0.14 * r2 * astig;
          break;
        case MapType::corneal_thickness:
          f = 0.28 + 0.04 * p.base_curvature + 0.48 * r2;
          break;
        case MapType::elevation_front:
          f = 0.52 + 0.04 * p.base_curvature + 0.10 * (r2 - 0.5) + 0.05 * r2 * astig;
          break;
        case MapType::elevation_back:
          f = 0.58 + 0.04 * p.base_curvature - 0.14 * (r2 - 0.5) + 0.07 * r2 * astig;
          break;
      }
      const double dx = x - lx, dy = y - ly;
      f += lesion_sign(p.map_type) * p.lesion_amplitude * std::exp(-(dx * dx + dy * dy) / s2);
      field[y * kImageSize + x] = std::clamp(f, 0.0, 1.0);
    }
  }
  return field;
}

std::array<std::uint8_t, 3> colormap(double value) {
  const double t = std::clamp(value, 0.0, 1.0) * (kAnchors.size() - 1);
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(t), kAnchors.size() - 2);
  const double a = t - static_cast<double>(i);
  std::array<std::uint8_t, 3> rgb{};
  for (int c = 0; c < 3; ++c)
    rgb[c] = static_cast<std::uint8_t>(std::lround((1 - a) * kAnchors[i][c] + a * kAnchors[i + 1][c]));
  return rgb;
}

LabeledImage generate_phantom(const PhantomParams& params, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, params.noise_std > 0 ? params.noise_std : 1.0);
  const auto field = render_field(params);
  LabeledImage out;
  out.class_label = class_label(params.map_type, params.condition);
  out.patient_id = params.patient_id;
  out.provenance = Provenance::real_phantom;
  out.seed = seed;
  for (std::size_t y = 0; y < kImageSize; ++y)
    for (std::size_t x = 0; x < kImageSize; ++x) {
      const double f = field[y * kImageSize + x];
      if (std::isnan(f)) continue;
      const double v = params.noise_std > 0 ? f + noise(rng) : f;
      const auto rgb = colormap(v);
      for (std::size_t c = 0; c < 3; ++c) out.image.at(y, x, c) = rgb[c];
    }
  return out;
}

Dataset generate_corpus(const CorpusOptions& opts) {
  // Patients of one condition contribute one image per map type while that
  // map still needs images, so patient p has maps {m : p < count(m, c)}.
  std::array<std::size_t, 2> patients_per_condition{};
  for (int c = 0; c < 2; ++c)
    for (int m = 0; m < 4; ++m)
      patients_per_condition[c] =
          std::max(patients_per_condition[c],
                   opts.counts[class_label(static_cast<MapType>(m), static_cast<Condition>(c))]);

  Dataset ds;
  std::size_t total = 0;
  for (auto n : opts.counts) total += n;
  ds.images.reserve(total);
  for (int label = 0; label < static_cast<int>(kNumClasses); ++label) {
    const MapType m = label_map_type(label);
    const Condition c = label_condition(label);
    const int first_id = c == Condition::normal ? 0 : static_cast<int>(patients_per_condition[0]);
    for (std::size_t p = 0; p < opts.counts[label]; ++p) {
      const int pid = first_id + static_cast<int>(p);
      // Eye-level parameters are shared across that patient's maps.
      Rng eye(derive_seed(opts.seed, "patient/" + std::to_string(pid)));
      PhantomParams params = sample_params(m, c, pid, opts.margin, eye);
      const auto seed = derive_seed(opts.seed, "image/" + std::to_string(pid) + "/" + to_string(m));
      ds.images.push_back(generate_phantom(params, seed));
    }
  }
  return ds;
}

Dataset oversample(const Dataset& dataset, Rng& rng, std::size_t num_classes) {
  if (num_classes == 0 || num_classes > kNumClasses) throw ValueError("oversample: bad class count");
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto label = static_cast<std::size_t>(dataset.images[i].class_label);
    if (label >= num_classes) throw ValueError("oversample: label outside [0, num_classes)");
    by_class[label].push_back(i);
  }
  std::size_t target = 0;
  for (const auto& v : by_class) target = std::max(target, v.size());
  if (target == 0) throw ValueError("oversample: all classes are empty");
  Dataset out = dataset;
  for (const auto& members : by_class) {
    if (members.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    for (std::size_t k = members.size(); k < target; ++k) out.images.push_back(dataset.images[members[pick(rng)]]);
  }
  return out;
}

Dataset undersample(const Dataset& dataset, Rng& rng, std::size_t num_classes) {
  if (num_classes == 0 || num_classes > kNumClasses) throw ValueError("undersample: bad class count");
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto label = static_cast<std::size_t>(dataset.images[i].class_label);
    if (label >= num_classes) throw ValueError("undersample: label outside [0, num_classes)");
    by_class[label].push_back(i);
  }
  std::size_t target = dataset.size();
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (by_class[c].empty()) throw ValueError("undersample: class " + std::to_string(c) + " is empty");
    target = std::min(target, by_class[c].size());
  }
  std::vector<std::size_t> keep;
  for (auto& members : by_class) {
    // Partial Fisher-Yates: the first `target` slots are a uniform sample.
    for (std::size_t k = 0; k < target; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, members.size() - 1);
      std::swap(members[k], members[pick(rng)]);
    }
    keep.insert(keep.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(target));
  }
  std::sort(keep.begin(), keep.end());
  return dataset.subset(keep);
}

std::vector<Fold> kfold_patient_split(const Dataset& dataset, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ValueError("kfold_patient_split: k must be >= 2");
  auto patients = dataset.patients();
  if (patients.size() < k)
    throw ValueError("kfold_patient_split: " + std::to_string(patients.size()) + " patients cannot fill " +
                     std::to_string(k) + " folds");
  Rng rng(seed);
  std::shuffle(patients.begin(), patients.end(), rng);
  std::vector<std::size_t> group_of_patient;  // parallel to sorted ids
  std::vector<int> sorted = dataset.patients();
  group_of_patient.resize(sorted.size());
  const std::size_t base = patients.size() / k, extra = patients.size() % k;
  std::vector<Fold> folds(k);
  std::size_t pos = 0;
  for (std::size_t g = 0; g < k; ++g) {
    const std::size_t n = base + (g < extra ? 1 : 0);
    for (std::size_t j = 0; j < n; ++j, ++pos) {
      const int pid = patients[pos];
      folds[g].test_patients.push_back(pid);
      const auto it = std::lower_bound(sorted.begin(), sorted.end(), pid);
      group_of_patient[static_cast<std::size_t>(it - sorted.begin())] = g;
    }
    std::sort(folds[g].test_patients.begin(), folds[g].test_patients.end());
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), dataset.images[i].patient_id);
    const std::size_t g = group_of_patient[static_cast<std::size_t>(it - sorted.begin())];
    for (std::size_t f = 0; f < k; ++f) (f == g ? folds[f].test : folds[f].train).push_back(i);
  }
  return folds;
}

std::pair<Dataset, Dataset> patient_holdout(const Dataset& dataset, double fraction, std::uint64_t seed) {
  auto patients = dataset.patients();
  Rng rng(seed);
  std::shuffle(patients.begin(), patients.end(), rng);
  std::size_t n_hold = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(patients.size())));
  if (fraction > 0 && n_hold == 0 && patients.size() >= 2) n_hold = 1;
  std::set<int> held(patients.begin(), patients.begin() + static_cast<std::ptrdiff_t>(n_hold));
  Dataset train, hold;
  for (const auto& im : dataset.images) (held.count(im.patient_id) ? hold : train).images.push_back(im);
  return {std::move(train), std::move(hold)};
}

template <typename T>
Tensor<T> normalize(std::span<const Image> images) {
  if (images.empty()) throw ValueError("normalize: empty image list");
  const std::size_t plane = kImageSize * kImageSize;
  Tensor<T> out({images.size(), kChannels, kImageSize, kImageSize});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& px = images[n].pixels;
    if (px.size() != kPixelCount) throw ShapeError("normalize: image is not 64x64x3");
    for (std::size_t i = 0; i < plane; ++i)
      for (std::size_t c = 0; c < kChannels; ++c)
        out[(n * kChannels + c) * plane + i] = static_cast<T>(px[i * kChannels + c] / T(127.5) - T(1));
  }
  return out;
}

template <typename T>
Tensor<T> normalize(const Dataset& dataset) {
  std::vector<Image> images;
  images.reserve(dataset.size());
  for (const auto& im : dataset.images) images.push_back(im.image);
  return normalize<T>(std::span<const Image>(images));
}

template <typename T>
std::vector<Image> denormalize(const Tensor<T>& batch) {
  if (batch.rank() != 4 || batch.dim(1) != kChannels || batch.dim(2) != kImageSize || batch.dim(3) != kImageSize)
    throw ShapeError("denormalize: expected N x 3 x 64 x 64, got " + shape_str(batch.shape()));
  const std::size_t plane = kImageSize * kImageSize;
  std::vector<Image> out(batch.dim(0));
  for (std::size_t n = 0; n < out.size(); ++n)
    for (std::size_t i = 0; i < plane; ++i)
      for (std::size_t c = 0; c < kChannels; ++c) {
        const double v = (static_cast<double>(batch[(n * kChannels + c) * plane + i]) + 1.0) * 127.5;
        out[n].pixels[i * kChannels + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  return out;
}

Dataset binary_task(const Dataset& dataset, MapType map) {
  Dataset out;
  for (const auto& im : dataset.images) {
    if (label_map_type(im.class_label) != map) continue;
    auto copy = im;
    copy.class_label = static_cast<int>(label_condition(im.class_label));
    out.images.push_back(std::move(copy));
  }
  return out;
}

template Tensor<float> normalize<float>(std::span<const Image>);
template Tensor<double> normalize<double>(std::span<const Image>);
template Tensor<float> normalize<float>(const Dataset&);
template Tensor<double> normalize<double>(const Dataset&);
template std::vector<Image> denormalize<float>(const Tensor<float>&);
template std::vector<Image> denormalize<double>(const Tensor<double>&);

}  // namespace topogan::data
