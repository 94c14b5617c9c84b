#include "topogan/classifier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "topogan/error.hpp"
#include "topogan/optim.hpp"

namespace topogan::clf {

ClassifierConfig ClassifierConfig::with_base_width(std::size_t w, std::size_t num_classes) {
  if (w == 0) throw ValueError("classifier width must be >= 1");
  ClassifierConfig c;
  c.widths = {w, 2 * w, 4 * w, 8 * w};
  c.num_classes = num_classes;
  return c;
}

template <typename T>
Classifier<T>::Classifier(const ClassifierConfig& cfg) : cfg_(cfg) {
  if (cfg.num_classes < 2) throw ValueError("classifier: num_classes must be >= 2, got " + std::to_string(cfg.num_classes));
  std::size_t cin = data::kChannels;
  for (std::size_t i = 0; i < 4; ++i) {
    if (cfg.widths[i] == 0) throw ValueError("classifier: zero block width");
    conv_[i] = nn::Conv2d<T>(store_, "c.conv" + std::to_string(i), cin, cfg.widths[i], 3, 2, 1, false);
    bn_[i] = nn::BatchNorm2d<T>(store_, "c.bn" + std::to_string(i), cfg.widths[i]);
    cin = cfg.widths[i];
  }
  head_ = nn::Dense<T>(store_, "c.head", cin, cfg.num_classes);
}

template <typename T>
Var<T> Classifier<T>::embed(const Var<T>& images, Mode mode) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != data::kChannels || s[2] != data::kImageSize || s[3] != data::kImageSize)
    throw ShapeError("classifier: expected N x 3 x 64 x 64 images, got " + shape_str(s));
  Var<T> h = images;
  const T slope = static_cast<T>(cfg_.leaky_slope);
  for (std::size_t i = 0; i < 4; ++i) h = ad::leaky_relu(bn_[i](conv_[i](h), mode), slope);
  return ad::global_avg_pool(h);
}

template <typename T>
Var<T> Classifier<T>::forward(const Var<T>& images, Mode mode) {
  return head_(embed(images, mode));
}

template class Classifier<float>;
template class Classifier<double>;

Model build_classifier(const ClassifierConfig& cfg, std::uint64_t seed) {
  Model m(cfg);
  Rng rng(derive_seed(seed, "init/classifier"));
  nn::init_weights(m.store(), cfg.init_std, rng);
  return m;
}

namespace {

Tensor<float> gather_rows(const Tensor<float>& all, std::span<const std::size_t> rows) {
  const std::size_t per = all.size() / all.dim(0);
  Shape shape = all.shape();
  shape[0] = rows.size();
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(all.data() + rows[i] * per, per, out.data() + i * per);
  return out;
}

Tensor<float> slice_rows(const Tensor<float>& all, std::size_t start, std::size_t count) {
  const std::size_t per = all.size() / all.dim(0);
  Shape shape = all.shape();
  shape[0] = count;
  Tensor<float> out(shape);
  std::copy_n(all.data() + start * per, count * per, out.data());
  return out;
}

// Consecutive (start, size) batches; a trailing single image joins the
// previous batch so batch norm always sees at least two samples.
std::vector<std::pair<std::size_t, std::size_t>> batch_spans(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch) out.emplace_back(start, std::min(batch, n - start));
  if (out.size() > 1 && out.back().second == 1) {
    out.pop_back();
    out.back().second += 1;
  }
  return out;
}

double accuracy_of(Model& model, const Tensor<float>& images, const std::vector<int>& labels) {
  const auto p = predict_batch(model, images);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += p.labels[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace

TrainResult train_classifier(Model& model, const data::Dataset& train, const data::Dataset& val,
                             const ClassifierTrainConfig& cfg,
                             const std::function<void(std::size_t, const TrainHistory&)>& on_epoch) {
  if (train.size() == 0) throw ValueError("train_classifier: empty training set");
  if (cfg.epochs == 0 || cfg.batch_size == 0) throw ValueError("train_classifier: epochs and batch_size must be >= 1");
  const std::size_t k = model.config().num_classes;
  for (const auto& ds : {&train, &val})
    for (const auto& im : ds->images)
      if (im.class_label < 0 || static_cast<std::size_t>(im.class_label) >= k)
        throw ValueError("train_classifier: label " + std::to_string(im.class_label) + " outside [0, " +
                         std::to_string(k) + ")");

  TrainResult result;
  const auto counts = train.class_counts();
  for (std::size_t c = 0; c < k; ++c)
    if (counts[c] == 0) result.missing_classes.push_back(static_cast<int>(c));

  const Tensor<float> x = data::normalize<float>(train);
  const std::vector<int> y = train.labels();
  const Tensor<float> vx = val.size() ? data::normalize<float>(val) : Tensor<float>();
  const std::vector<int> vy = val.labels();

  ad::Adam<float> opt(model.store().parameters(), cfg.lr);
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0;
    std::size_t hit = 0;
    for (const auto& [start, nb] : batch_spans(n, cfg.batch_size)) {
      const std::span<const std::size_t> rows(order.data() + start, nb);
      std::vector<int> labels(nb);
      for (std::size_t i = 0; i < nb; ++i) labels[i] = y[rows[i]];
      opt.zero_grad();
      auto logits = model.forward(Var<float>(gather_rows(x, rows)), Mode::train);
      auto loss = ad::softmax_cross_entropy(logits, ad::one_hot<float>(labels, k));
      ad::backward(loss);
      opt.step();
      loss_sum += static_cast<double>(loss.value()[0]) * static_cast<double>(nb);
      const float* z = logits.value().data();
      for (std::size_t i = 0; i < nb; ++i) {
        const auto arg = std::max_element(z + i * k, z + (i + 1) * k) - (z + i * k);
        hit += arg == labels[i];
      }
    }
    auto& h = result.history;
    h.train_loss.push_back(loss_sum / static_cast<double>(n));
    h.train_acc.push_back(static_cast<double>(hit) / static_cast<double>(n));
    h.val_acc.push_back(val.size() ? accuracy_of(model, vx, vy) : accuracy_of(model, x, y));
    if (on_epoch) on_epoch(epoch, h);
  }
  return result;
}

Predictions predict_batch(Model& model, const Tensor<float>& images, std::size_t chunk) {
  if (images.rank() != 4) throw ShapeError("predict_batch: expected N x 3 x 64 x 64, got " + shape_str(images.shape()));
  const std::size_t n = images.dim(0), k = model.config().num_classes;
  if (chunk == 0) chunk = n;
  Predictions p;
  p.labels.resize(n);
  p.probabilities.resize(n * k);
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t nb = std::min(chunk, n - start);
    const auto logits = model.forward(Var<float>(slice_rows(images, start, nb)), Mode::eval);
    for (std::size_t i = 0; i < nb; ++i) {
      const float* z = logits.value().data() + i * k;
      const double mx = *std::max_element(z, z + k);
      double s = 0;
      for (std::size_t j = 0; j < k; ++j) s += std::exp(z[j] - mx);
      double* row = p.probabilities.data() + (start + i) * k;
      for (std::size_t j = 0; j < k; ++j) row[j] = std::exp(z[j] - mx) / s;
      p.labels[start + i] = static_cast<int>(std::max_element(z, z + k) - z);
    }
  }
  return p;
}

Predictions predict_batch(Model& model, const data::Dataset& dataset, std::size_t chunk) {
  if (dataset.size() == 0) return {};
  return predict_batch(model, data::normalize<float>(dataset), chunk);
}

Tensor<double> extract_embeddings(Model& model, const data::Dataset& dataset, std::size_t chunk) {
  if (dataset.size() == 0) throw ValueError("extract_embeddings: empty dataset");
  const Tensor<float> x = data::normalize<float>(dataset);
  const std::size_t n = dataset.size(), e = model.config().embedding_dim();
  if (chunk == 0) chunk = n;
  Tensor<double> out({n, e});
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t nb = std::min(chunk, n - start);
    const auto emb = model.embed(Var<float>(slice_rows(x, start, nb)), Mode::eval);
    for (std::size_t i = 0; i < nb * e; ++i) out[start * e + i] = emb.value()[i];
  }
  return out;
}

AttResult measure_att(Model& model, const data::Dataset& images, std::size_t repetitions) {
  if (images.size() == 0) throw ValueError("measure_att: empty image set");
  if (repetitions == 0) throw ValueError("measure_att: repetitions must be >= 1");
  const Tensor<float> x = data::normalize<float>(images);
  const std::size_t n = images.size();
  std::vector<Tensor<float>> singles;
  singles.reserve(n);
  for (std::size_t i = 0; i < n; ++i) singles.push_back(slice_rows(x, i, 1));
  for (const auto& s : singles) model.forward(Var<float>(s), Mode::eval);  // warm-up

  std::vector<double> t;
  t.reserve(n * repetitions);
  for (std::size_t r = 0; r < repetitions; ++r)
    for (const auto& s : singles) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto out = model.forward(Var<float>(s), Mode::eval);
      const auto t1 = std::chrono::steady_clock::now();
      if (out.value().size() == 0) throw ValueError("measure_att: empty output");
      t.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
  AttResult r;
  r.timings = t.size();
  r.mean_seconds = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
  double v = 0;
  for (double s : t) v += (s - r.mean_seconds) * (s - r.mean_seconds);
  r.std_seconds = t.size() > 1 ? std::sqrt(v / static_cast<double>(t.size() - 1)) : 0.0;
  return r;
}

}  // namespace topogan::clf
