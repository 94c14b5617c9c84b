#pragma once

// Compact diagnosis CNN: four stride-2 3x3 conv blocks, global average pool,
// dense head. The width knob stands in for the different backbones.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "topogan/nn.hpp"
#include "topogan/phantom.hpp"

namespace topogan::clf {

using ad::Mode;
using ad::Var;

struct ClassifierConfig {
  std::array<std::size_t, 4> widths{16, 32, 64, 128};
  std::size_t num_classes = data::kNumClasses;
  double leaky_slope = 0.2;
  double init_std = 0.02;

  // Widths w, 2w, 4w, 8w.
  static ClassifierConfig with_base_width(std::size_t w, std::size_t num_classes);
  std::size_t embedding_dim() const { return widths.back(); }
};

template <typename T>
class Classifier {
 public:
  explicit Classifier(const ClassifierConfig& cfg);

  // N x num_classes logits.
  Var<T> forward(const Var<T>& images, Mode mode);
  // Post-pool, pre-dense activations, N x embedding_dim.
  Var<T> embed(const Var<T>& images, Mode mode);

  const ClassifierConfig& config() const { return cfg_; }
  nn::ParamStore<T>& store() { return store_; }
  const nn::ParamStore<T>& store() const { return store_; }
  std::size_t parameter_count() const { return store_.parameter_count(); }

 private:
  ClassifierConfig cfg_;
  nn::ParamStore<T> store_;
  std::array<nn::Conv2d<T>, 4> conv_;
  std::array<nn::BatchNorm2d<T>, 4> bn_;
  nn::Dense<T> head_;
};

using Model = Classifier<float>;

// Builds and initializes weights from `seed`.
Model build_classifier(const ClassifierConfig& cfg, std::uint64_t seed);

struct ClassifierTrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  bool shuffle = true;
  std::uint64_t seed = 0;
};

struct TrainHistory {
  std::vector<double> train_loss, train_acc, val_acc;
  std::size_t size() const { return train_loss.size(); }
};

struct TrainResult {
  TrainHistory history;
  // Labels in [0, num_classes) with no training image.
  std::vector<int> missing_classes;
};

// Minimizes softmax cross-entropy with Adam. `val` may be empty; val_acc is
// then the training accuracy of that epoch's eval-mode pass over `train`.
TrainResult train_classifier(Model& model, const data::Dataset& train, const data::Dataset& val,
                             const ClassifierTrainConfig& cfg,
                             const std::function<void(std::size_t epoch, const TrainHistory&)>& on_epoch = {});

struct Predictions {
  std::vector<int> labels;
  std::vector<double> probabilities;  // N x num_classes, row-major
};

Predictions predict_batch(Model& model, const Tensor<float>& images, std::size_t chunk = 128);
Predictions predict_batch(Model& model, const data::Dataset& dataset, std::size_t chunk = 128);
Tensor<double> extract_embeddings(Model& model, const data::Dataset& dataset, std::size_t chunk = 128);

struct AttResult {
  double mean_seconds = 0, std_seconds = 0;
  std::size_t timings = 0;
};

// Single-image eval-mode forwards; one untimed warm-up pass over the images.
AttResult measure_att(Model& model, const data::Dataset& images, std::size_t repetitions);

}  // namespace topogan::clf
