#pragma once

// Layer building blocks and the parameter registry shared by the generator,
// discriminator and classifier networks.

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "topogan/autodiff.hpp"
#include "topogan/rng.hpp"

namespace topogan::nn {

using ad::Mode;
using ad::Parameter;
using ad::Var;

enum class ParamKind { weight, bias, bn_scale, bn_shift };

// Owns every Parameter and batch-norm running statistic of one network, in
// registration order. That order is the serialisation order.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    ParamKind kind;
    Parameter<T> param;
  };
  struct Buffer {
    std::string name;
    std::shared_ptr<ad::BatchNormStats<T>> stats;
  };

  Parameter<T> add(std::string name, Shape shape, ParamKind kind) {
    Parameter<T> p(std::move(name), Tensor<T>(std::move(shape)));
    entries_.push_back({kind, p});
    return p;
  }
  std::shared_ptr<ad::BatchNormStats<T>> add_stats(std::string name, std::size_t channels) {
    auto s = std::make_shared<ad::BatchNormStats<T>>();
    s->running_mean = Tensor<T>({channels}, T(0));
    s->running_var = Tensor<T>({channels}, T(1));
    buffers_.push_back({std::move(name), s});
    return s;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  const std::vector<Buffer>& buffers() const { return buffers_; }

  std::vector<Parameter<T>> parameters() const {
    std::vector<Parameter<T>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.param);
    return out;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.param.value().size();
    return n;
  }
  void set_trainable(bool on) {
    for (auto& e : entries_) e.param.set_trainable(on);
  }
  void zero_grad() {
    for (auto& e : entries_) e.param.zero_grad();
  }

 private:
  std::vector<Entry> entries_;
  std::vector<Buffer> buffers_;
};

// Weights ~ Normal(0, std^2); biases and BN shifts zero; BN scales one.
template <typename T>
void init_weights(ParamStore<T>& store, double std, Rng& rng);

template <typename T>
struct Dense {
  Parameter<T> weight, bias;
  Dense() = default;
  Dense(ParamStore<T>& s, const std::string& name, std::size_t in, std::size_t out)
      : weight(s.add(name + ".weight", {in, out}, ParamKind::weight)),
        bias(s.add(name + ".bias", {out}, ParamKind::bias)) {}
  Var<T> operator()(const Var<T>& x) const { return ad::dense(x, weight.var(), bias.var()); }
};

template <typename T>
struct Conv2d {
  Parameter<T> weight, bias;
  std::size_t stride = 1, pad = 0;
  Conv2d() = default;
  // Layers feeding batch norm pass with_bias = false: BN cancels any bias.
  Conv2d(ParamStore<T>& s, const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
         std::size_t stride_, std::size_t pad_, bool with_bias = true)
      : weight(s.add(name + ".weight", {cout, cin, k, k}, ParamKind::weight)),
        bias(with_bias ? s.add(name + ".bias", {cout}, ParamKind::bias) : Parameter<T>()),
        stride(stride_),
        pad(pad_) {}
  Var<T> operator()(const Var<T>& x) const { return ad::conv2d(x, weight.var(), bias.var(), stride, pad); }
};

template <typename T>
struct ConvTranspose2d {
  Parameter<T> weight, bias;
  std::size_t stride = 1, pad = 0, output_pad = 0;
  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore<T>& s, const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
                  std::size_t stride_, std::size_t pad_, std::size_t output_pad_, bool with_bias = true)
      : weight(s.add(name + ".weight", {cin, cout, k, k}, ParamKind::weight)),
        bias(with_bias ? s.add(name + ".bias", {cout}, ParamKind::bias) : Parameter<T>()),
        stride(stride_),
        pad(pad_),
        output_pad(output_pad_) {}
  Var<T> operator()(const Var<T>& x) const {
    return ad::transposed_conv2d(x, weight.var(), bias.var(), stride, pad, output_pad);
  }
};

template <typename T>
struct BatchNorm2d {
  Parameter<T> gamma, beta;
  std::shared_ptr<ad::BatchNormStats<T>> stats;
  BatchNorm2d() = default;
  BatchNorm2d(ParamStore<T>& s, const std::string& name, std::size_t channels)
      : gamma(s.add(name + ".gamma", {channels}, ParamKind::bn_scale)),
        beta(s.add(name + ".beta", {channels}, ParamKind::bn_shift)),
        stats(s.add_stats(name + ".running", channels)) {}
  Var<T> operator()(const Var<T>& x, Mode mode) const {
    return ad::batchnorm2d(x, gamma.var(), beta.var(), *stats, mode);
  }
};

}  // namespace topogan::nn
