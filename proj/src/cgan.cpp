#include "topogan/cgan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "topogan/error.hpp"
#include "topogan/optim.hpp"

namespace topogan::gan {

std::string to_string(Profile p) { return p == Profile::desk ? "desk" : "full"; }

Profile parse_profile(const std::string& s) {
  if (s == "desk") return Profile::desk;
  if (s == "full") return Profile::full;
  throw ValueError("unknown profile '" + s + "' (expected desk or full)");
}

std::string to_string(Objective o) { return o == Objective::nonsaturating ? "nonsaturating" : "saturating"; }

Objective parse_objective(const std::string& s) {
  if (s == "nonsaturating") return Objective::nonsaturating;
  if (s == "saturating") return Objective::saturating;
  throw ValueError("unknown generator objective '" + s + "'");
}

std::string to_string(TrainMode m) { return m == TrainMode::per_class ? "per_class" : "conditional"; }

TrainMode parse_train_mode(const std::string& s) {
  if (s == "per_class") return TrainMode::per_class;
  if (s == "conditional") return TrainMode::conditional;
  throw ValueError("unknown gan mode '" + s + "'");
}

GeneratorConfig GeneratorConfig::for_profile(Profile p) {
  GeneratorConfig c;
  if (p == Profile::full) {
    c.base_channels = 1024;
    c.channels = {512, 256, 128, 3};
  }
  return c;
}

DiscriminatorConfig DiscriminatorConfig::for_profile(Profile p, std::size_t num_classes) {
  DiscriminatorConfig c;
  if (p == Profile::full) c.channels = {128, 256, 512, 1024};
  c.num_classes = num_classes;
  return c;
}

namespace {

constexpr std::size_t kSeedSide = 4;
constexpr std::size_t kPlane = data::kImageSize * data::kImageSize;

void check_labels(std::span<const int> labels, std::size_t n, std::size_t classes, const char* who) {
  if (labels.size() != n)
    throw ShapeError(std::string(who) + ": " + std::to_string(labels.size()) + " labels for a batch of " +
                     std::to_string(n));
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= classes)
      throw ValueError(std::string(who) + ": label " + std::to_string(l) + " outside [0, " + std::to_string(classes) +
                       ")");
}

}  // namespace

template <typename T>
Generator<T>::Generator(const GeneratorConfig& cfg) : cfg_(cfg) {
  if (cfg.channels.back() != data::kChannels) throw ValueError("generator: last stage must emit 3 channels");
  project_ = nn::Dense<T>(store_, "g.project", cfg.z_dim + cfg.label_classes,
                          kSeedSide * kSeedSide * cfg.base_channels);
  project_bn_ = nn::BatchNorm2d<T>(store_, "g.project_bn", cfg.base_channels);
  std::size_t cin = cfg.base_channels;
  for (std::size_t i = 0; i < 4; ++i) {
    deconv_[i] = nn::ConvTranspose2d<T>(store_, "g.deconv" + std::to_string(i), cin, cfg.channels[i], cfg.kernel,
                                        cfg.stride, cfg.pad, cfg.output_pad, i == 3);
    if (i < 3) bn_[i] = nn::BatchNorm2d<T>(store_, "g.bn" + std::to_string(i), cfg.channels[i]);
    cin = cfg.channels[i];
  }
}

template <typename T>
Var<T> Generator<T>::forward(const Var<T>& z, std::span<const int> labels, Mode mode) {
  if (z.shape().size() != 2 || z.shape()[1] != cfg_.z_dim)
    throw ShapeError("generator: expected N x " + std::to_string(cfg_.z_dim) + " noise, got " +
                     shape_str(z.shape()));
  const std::size_t n = z.shape()[0];
  Var<T> x = z;
  if (cfg_.label_classes > 0) {
    check_labels(labels, n, cfg_.label_classes, "generator");
    x = ad::concat(x, Var<T>(ad::one_hot<T>(labels, cfg_.label_classes)));
  }
  stages_.clear();
  Var<T> h = ad::reshape(project_(x), {n, cfg_.base_channels, kSeedSide, kSeedSide});
  h = ad::relu(project_bn_(h, mode));
  stages_.push_back(h.shape());
  for (std::size_t i = 0; i < 4; ++i) {
    h = deconv_[i](h);
    h = i < 3 ? ad::relu(bn_[i](h, mode)) : ad::tanh(h);
    stages_.push_back(h.shape());
  }
  return h;
}

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorConfig& cfg) : cfg_(cfg) {
  if (cfg.label_classes > 0) label_plane_ = nn::Dense<T>(store_, "d.label_plane", cfg.label_classes, kPlane);
  std::size_t cin = data::kChannels + (cfg.label_classes > 0 ? 1 : 0);
  for (std::size_t i = 0; i < 4; ++i) {
    conv_[i] = nn::Conv2d<T>(store_, "d.conv" + std::to_string(i), cin, cfg.channels[i], cfg.kernel, cfg.stride,
                             cfg.pad, i == 0);
    if (i > 0) bn_[i - 1] = nn::BatchNorm2d<T>(store_, "d.bn" + std::to_string(i), cfg.channels[i]);
    cin = cfg.channels[i];
  }
  const std::size_t features = cin * kSeedSide * kSeedSide;
  adv_head_ = nn::Dense<T>(store_, "d.adv_head", features, 1);
  if (cfg.num_classes > 0) class_head_ = nn::Dense<T>(store_, "d.class_head", features, cfg.num_classes);
}

template <typename T>
DiscriminatorOutput<T> Discriminator<T>::forward(const Var<T>& images, std::span<const int> labels, Mode mode) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != data::kChannels || s[2] != data::kImageSize || s[3] != data::kImageSize)
    throw ShapeError("discriminator: expected N x 3 x 64 x 64 images, got " + shape_str(s));
  const std::size_t n = s[0];
  Var<T> h = images;
  if (cfg_.label_classes > 0) {
    check_labels(labels, n, cfg_.label_classes, "discriminator");
    auto plane = ad::reshape(label_plane_(Var<T>(ad::one_hot<T>(labels, cfg_.label_classes))),
                             {n, 1, data::kImageSize, data::kImageSize});
    h = ad::concat(h, plane);
  }
  stages_.clear();
  stages_.push_back(h.shape());
  const T slope = static_cast<T>(cfg_.leaky_slope);
  for (std::size_t i = 0; i < 4; ++i) {
    h = conv_[i](h);
    if (i > 0) h = bn_[i - 1](h, mode);
    h = ad::leaky_relu(h, slope);
    stages_.push_back(h.shape());
  }
  const auto flat = ad::reshape(h, {n, shape_numel(h.shape()) / n});
  DiscriminatorOutput<T> out;
  out.adv_prob = ad::sigmoid(adv_head_(flat));
  if (cfg_.num_classes > 0) out.class_logits = class_head_(flat);
  return out;
}

template <typename T>
Tensor<T> sample_noise(std::size_t batch, Rng& rng, std::size_t dim) {
  if (batch == 0 || dim == 0) throw ValueError("sample_noise: batch and dim must be >= 1");
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor<T> z({batch, dim});
  for (auto& v : z.vec()) v = static_cast<T>(u(rng));
  return z;
}

AdversarialLosses adversarial_losses(std::span<const double> d_real, std::span<const double> d_fake,
                                     Objective objective) {
  if (d_real.empty() || d_fake.empty()) throw ValueError("adversarial_losses: empty batch");
  auto clip = [](double p) { return std::clamp(p, ad::kEpsClip, 1.0 - ad::kEpsClip); };
  double real = 0, fake_neg = 0, fake_pos = 0;
  for (double p : d_real) real -= std::log(clip(p));
  for (double p : d_fake) {
    fake_neg -= std::log(1 - clip(p));
    fake_pos -= std::log(clip(p));
  }
  const double nr = static_cast<double>(d_real.size()), nf = static_cast<double>(d_fake.size());
  AdversarialLosses out;
  out.loss_d = real / nr + fake_neg / nf;
  out.loss_g = objective == Objective::nonsaturating ? fake_pos / nf : -(fake_neg / nf);
  return out;
}

template <typename T>
Var<T> generator_loss(const Var<T>& d_fake, Objective objective) {
  if (objective == Objective::nonsaturating) return ad::binary_cross_entropy(d_fake, Tensor<T>(d_fake.shape(), T(1)));
  return ad::scale(ad::binary_cross_entropy(d_fake, Tensor<T>(d_fake.shape(), T(0))), T(-1));
}

namespace {

double mean_of(const Tensor<float>& t) {
  double s = 0;
  for (float v : t.vec()) s += v;
  return s / static_cast<double>(t.size());
}

Tensor<float> gather_rows(const Tensor<float>& all, std::span<const std::size_t> rows) {
  const std::size_t per = all.size() / all.dim(0);
  Shape shape = all.shape();
  shape[0] = rows.size();
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(all.data() + rows[i] * per, per, out.data() + i * per);
  return out;
}

}  // namespace

GanTrainConfig GanTrainConfig::for_profile(Profile p) {
  GanTrainConfig c;
  c.profile = p;
  c.batch_size = p == Profile::desk ? 2 : 32;
  return c;
}

TrainedGenerator train_cgan(const data::Dataset& dataset, std::optional<int> target_class, std::size_t num_classes,
                            const GanTrainConfig& cfg) {
  if (cfg.epochs == 0) throw ValueError("train_cgan: epochs must be >= 1");
  if (!(cfg.lr > 0)) throw ValueError("train_cgan: lr must be > 0");
  if (cfg.batch_size == 0) throw ValueError("train_cgan: batch_size must be >= 1");
  if (num_classes == 0 || num_classes > data::kNumClasses) throw ValueError("train_cgan: bad class count");
  const bool conditional = cfg.mode == TrainMode::conditional;
  if (!conditional && !target_class) throw ValueError("train_cgan: per_class mode needs a target class");

  data::Dataset train = conditional ? dataset : dataset.of_class(*target_class);
  if (train.size() == 0)
    throw ValueError("train_cgan: no training images" +
                     (target_class ? " for class " + std::to_string(*target_class) : std::string()));
  for (const auto& im : train.images)
    if (im.class_label < 0 || static_cast<std::size_t>(im.class_label) >= num_classes)
      throw ValueError("train_cgan: label " + std::to_string(im.class_label) + " outside [0, " +
                       std::to_string(num_classes) + ")");

  auto gcfg = GeneratorConfig::for_profile(cfg.profile);
  auto dcfg = DiscriminatorConfig::for_profile(cfg.profile, cfg.class_head ? num_classes : 0);
  if (conditional) gcfg.label_classes = dcfg.label_classes = num_classes;

  auto gen = std::make_shared<Generator<float>>(gcfg);
  Discriminator<float> disc(dcfg);
  {
    Rng g_init(derive_seed(cfg.seed, "init/generator"));
    Rng d_init(derive_seed(cfg.seed, "init/discriminator"));
    nn::init_weights(gen->store(), cfg.init_std, g_init);
    nn::init_weights(disc.store(), cfg.init_std, d_init);
  }
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  Rng noise_rng(derive_seed(cfg.seed, "noise"));

  ad::Adam<float> opt_g(gen->store().parameters(), cfg.lr);
  ad::Adam<float> opt_d(disc.store().parameters(), cfg.lr);

  const Tensor<float> images = data::normalize<float>(train);
  const std::vector<int> labels = train.labels();
  const std::size_t n = train.size();
  const float aux = static_cast<float>(cfg.aux_weight);
  const bool use_aux = cfg.class_head && cfg.aux_weight > 0;

  TrainedGenerator result;
  result.generator = gen;
  if (!conditional) result.target_class = target_class;
  auto& hist = result.history;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t nb = std::min(cfg.batch_size, n - start);
      const std::span<const std::size_t> rows(order.data() + start, nb);
      const Var<float> real(gather_rows(images, rows));
      std::vector<int> batch_labels(nb);
      for (std::size_t i = 0; i < nb; ++i) batch_labels[i] = labels[rows[i]];
      const Tensor<float> onehot = ad::one_hot<float>(batch_labels, num_classes);

      // Discriminator step on a real batch and a detached fake batch.
      gen->store().set_trainable(false);
      disc.store().set_trainable(true);
      opt_d.zero_grad();
      const Var<float> fake(gen->forward(sample_noise<float>(nb, noise_rng), batch_labels, Mode::train).value());
      auto out_real = disc.forward(real, batch_labels, Mode::train);
      auto out_fake = disc.forward(fake, batch_labels, Mode::train);
      Var<float> loss_d = ad::add(ad::binary_cross_entropy(out_real.adv_prob, Tensor<float>({nb, 1}, 1.0f)),
                                  ad::binary_cross_entropy(out_fake.adv_prob, Tensor<float>({nb, 1}, 0.0f)));
      if (use_aux) loss_d = ad::add(loss_d, ad::scale(ad::softmax_cross_entropy(out_real.class_logits, onehot), aux));
      ad::backward(loss_d);
      opt_d.step();

      // Generator step through the frozen discriminator with fresh noise.
      gen->store().set_trainable(true);
      disc.store().set_trainable(false);
      opt_g.zero_grad();
      auto gen_out = gen->forward(sample_noise<float>(nb, noise_rng), batch_labels, Mode::train);
      auto judged = disc.forward(gen_out, batch_labels, Mode::train);
      Var<float> loss_g = generator_loss(judged.adv_prob, cfg.objective);
      if (use_aux) loss_g = ad::add(loss_g, ad::scale(ad::softmax_cross_entropy(judged.class_logits, onehot), aux));
      ad::backward(loss_g);
      opt_g.step();

      hist.loss_d.push_back(loss_d.value()[0]);
      hist.loss_g.push_back(loss_g.value()[0]);
      hist.d_real.push_back(mean_of(out_real.adv_prob.value()));
      hist.d_fake.push_back(mean_of(out_fake.adv_prob.value()));
      if (!std::isfinite(hist.loss_d.back()) || !std::isfinite(hist.loss_g.back()))
        throw ValueError("train_cgan: non-finite loss at iteration " + std::to_string(hist.size()));
    }
  }
  gen->store().set_trainable(true);
  return result;
}

std::vector<TrainedGenerator> train_gans(const data::Dataset& dataset, std::size_t num_classes,
                                         const GanTrainConfig& cfg) {
  std::vector<TrainedGenerator> out;
  if (cfg.mode == TrainMode::conditional) {
    out.push_back(train_cgan(dataset, std::nullopt, num_classes, cfg));
    return out;
  }
  const auto counts = dataset.class_counts();
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) continue;
    auto class_cfg = cfg;
    class_cfg.seed = derive_seed(cfg.seed, "gan/class/" + std::to_string(c));
    out.push_back(train_cgan(dataset, static_cast<int>(c), num_classes, class_cfg));
  }
  return out;
}

data::Dataset synthesize(Generator<float>& generator, std::size_t n, int label, std::uint64_t seed, Mode mode,
                         std::size_t chunk) {
  if (n == 0) throw ValueError("synthesize: n must be >= 1");
  if (chunk == 0) chunk = n;
  const std::size_t z_dim = generator.config().z_dim;
  data::Dataset out;
  out.images.reserve(n);
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t nb = std::min(chunk, n - start);
    Tensor<float> z({nb, z_dim});
    std::vector<std::uint64_t> seeds(nb);
    for (std::size_t i = 0; i < nb; ++i) {
      seeds[i] = derive_seed(seed, std::to_string(label) + "/" + std::to_string(start + i));
      Rng rng(seeds[i]);
      const auto row = sample_noise<float>(1, rng, z_dim);
      std::copy_n(row.data(), z_dim, z.data() + i * z_dim);
    }
    const std::vector<int> labels(nb, label);
    const auto images = data::denormalize(generator.forward(z, labels, mode).value());
    for (std::size_t i = 0; i < nb; ++i) {
      data::LabeledImage li;
      li.image = images[i];
      li.class_label = label;
      li.patient_id = -1;
      li.provenance = data::Provenance::synthesized;
      li.seed = seeds[i];
      out.images.push_back(std::move(li));
    }
  }
  return out;
}

data::Dataset synthesize(const std::vector<TrainedGenerator>& generators, std::size_t n_per_class,
                         std::size_t num_classes, std::uint64_t seed, Mode mode) {
  data::Dataset out;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const int label = static_cast<int>(c);
    const TrainedGenerator* chosen = nullptr;
    for (const auto& g : generators)
      if (!g.target_class || *g.target_class == label) {
        chosen = &g;
        if (g.target_class) break;
      }
    if (!chosen) continue;  // no generator for an empty class
    out.append(synthesize(*chosen->generator, n_per_class, label, seed, mode));
  }
  return out;
}

template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template Tensor<float> sample_noise<float>(std::size_t, Rng&, std::size_t);
template Tensor<double> sample_noise<double>(std::size_t, Rng&, std::size_t);
template Var<float> generator_loss<float>(const Var<float>&, Objective);
template Var<double> generator_loss<double>(const Var<double>&, Objective);

}  // namespace topogan::gan
