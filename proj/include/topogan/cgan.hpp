#pragma once

// Conditional GAN: DCGAN-style generator and two-headed discriminator, the
// alternating adversarial training loop, and sampling of labeled images.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topogan/nn.hpp"
#include "topogan/phantom.hpp"

namespace topogan::gan {

using ad::Mode;
using ad::Var;

inline constexpr std::size_t kNoiseDim = 100;

enum class Profile { desk, full };
std::string to_string(Profile p);
Profile parse_profile(const std::string& s);

struct GeneratorConfig {
  std::size_t z_dim = kNoiseDim;
  std::size_t base_channels = 128;                     // seed is 4 x 4 x base_channels
  std::array<std::size_t, 4> channels{64, 32, 16, 3};  // deconv outputs
  std::size_t kernel = 5, stride = 2, pad = 2, output_pad = 1;
  // > 0 concatenates a one-hot label of this width to z.
  std::size_t label_classes = 0;

  static GeneratorConfig for_profile(Profile p);
};

struct DiscriminatorConfig {
  std::array<std::size_t, 4> channels{16, 32, 64, 128};
  std::size_t kernel = 5, stride = 2, pad = 2;
  double leaky_slope = 0.2;
  // Width of the class head; 0 disables it.
  std::size_t num_classes = 0;
  // > 0 appends a learned per-label input plane.
  std::size_t label_classes = 0;

  static DiscriminatorConfig for_profile(Profile p, std::size_t num_classes);
};

template <typename T>
class Generator {
 public:
  explicit Generator(const GeneratorConfig& cfg);

  // z: N x z_dim; labels required (size N) when the config is conditional.
  Var<T> forward(const Var<T>& z, std::span<const int> labels, Mode mode);
  Var<T> forward(const Tensor<T>& z, std::span<const int> labels, Mode mode) {
    return forward(Var<T>(z), labels, mode);
  }

  const GeneratorConfig& config() const { return cfg_; }
  nn::ParamStore<T>& store() { return store_; }
  const nn::ParamStore<T>& store() const { return store_; }
  // Output shapes of the seed projection and each deconv stage of the last forward.
  const std::vector<Shape>& stage_shapes() const { return stages_; }

 private:
  GeneratorConfig cfg_;
  nn::ParamStore<T> store_;
  nn::Dense<T> project_;
  nn::BatchNorm2d<T> project_bn_;
  std::array<nn::ConvTranspose2d<T>, 4> deconv_;
  std::array<nn::BatchNorm2d<T>, 3> bn_;
  std::vector<Shape> stages_;
};

template <typename T>
struct DiscriminatorOutput {
  Var<T> adv_prob;      // N x 1, sigmoid
  Var<T> class_logits;  // N x num_classes, undefined without a class head
};

template <typename T>
class Discriminator {
 public:
  explicit Discriminator(const DiscriminatorConfig& cfg);

  DiscriminatorOutput<T> forward(const Var<T>& images, std::span<const int> labels, Mode mode);

  const DiscriminatorConfig& config() const { return cfg_; }
  nn::ParamStore<T>& store() { return store_; }
  const nn::ParamStore<T>& store() const { return store_; }
  const std::vector<Shape>& stage_shapes() const { return stages_; }

 private:
  DiscriminatorConfig cfg_;
  nn::ParamStore<T> store_;
  nn::Dense<T> label_plane_;
  std::array<nn::Conv2d<T>, 4> conv_;
  std::array<nn::BatchNorm2d<T>, 3> bn_;
  nn::Dense<T> adv_head_, class_head_;
  std::vector<Shape> stages_;
};

// Uniform on [-1, 1], batch x dim.
template <typename T>
Tensor<T> sample_noise(std::size_t batch, Rng& rng, std::size_t dim = kNoiseDim);

enum class Objective { nonsaturating, saturating };
std::string to_string(Objective o);
Objective parse_objective(const std::string& s);

struct AdversarialLosses {
  double loss_d = 0, loss_g = 0;
};

// Batch-mean adversarial terms with probabilities clamped to
// [kEpsClip, 1 - kEpsClip]:
//   loss_d = -mean ln d_real - mean ln(1 - d_fake)
//   loss_g = -mean ln d_fake (nonsaturating) or mean ln(1 - d_fake)
AdversarialLosses adversarial_losses(std::span<const double> d_real, std::span<const double> d_fake,
                                     Objective objective);

template <typename T>
Var<T> generator_loss(const Var<T>& d_fake, Objective objective);

enum class TrainMode { per_class, conditional };
std::string to_string(TrainMode m);
TrainMode parse_train_mode(const std::string& s);

struct GanTrainConfig {
  std::size_t epochs = 20;
  double lr = 1e-4;
  double init_std = 0.02;
  std::size_t batch_size = 32;
  TrainMode mode = TrainMode::per_class;
  Objective objective = Objective::nonsaturating;
  bool class_head = true;
  double aux_weight = 1.0;
  Profile profile = Profile::desk;
  std::uint64_t seed = 0;

  // Desk runs use batch 2 so that 20 epochs over a few hundred images still
  // give the networks enough Adam steps at lr 1e-4.
  static GanTrainConfig for_profile(Profile p);
};

struct GanHistory {
  std::vector<double> loss_d, loss_g, d_real, d_fake;
  std::size_t size() const { return loss_d.size(); }
};

// One trained generator. `target_class` is the class it emits in per_class
// mode; conditional generators emit whatever label they are asked for.
struct TrainedGenerator {
  std::shared_ptr<Generator<float>> generator;
  std::optional<int> target_class;
  GanHistory history;
};

// Trains on every image of `target_class` (per_class) or on the whole
// dataset (conditional). Labels must lie in [0, num_classes).
TrainedGenerator train_cgan(const data::Dataset& dataset, std::optional<int> target_class, std::size_t num_classes,
                            const GanTrainConfig& cfg);

// One generator per non-empty class in per_class mode, a single shared one in
// conditional mode. Per-class runs use seed derive(cfg.seed, "gan/class/<c>").
std::vector<TrainedGenerator> train_gans(const data::Dataset& dataset, std::size_t num_classes,
                                         const GanTrainConfig& cfg);

// Image i is drawn from noise seeded by derive(seed, "<label>/<i>") and
// carries that seed. In eval mode each image depends on its own noise only
// (up to float rounding that varies with the batch size).
inline constexpr Mode kSynthesisMode = Mode::eval;
data::Dataset synthesize(Generator<float>& generator, std::size_t n, int label, std::uint64_t seed,
                         Mode mode = kSynthesisMode, std::size_t chunk = 64);
data::Dataset synthesize(const std::vector<TrainedGenerator>& generators, std::size_t n_per_class,
                         std::size_t num_classes, std::uint64_t seed, Mode mode = kSynthesisMode);

}  // namespace topogan::gan
