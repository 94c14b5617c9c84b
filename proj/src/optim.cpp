#include "topogan/optim.hpp"

#include <cmath>

namespace topogan::ad {

template <typename T>
Adam<T>::Adam(std::vector<Parameter<T>> params, double lr, AdamConfig cfg)
    : params_(std::move(params)), state_(params_.size()), lr_(lr), cfg_(cfg) {
  if (!(lr > 0)) throw ValueError("Adam: learning rate must be > 0, got " + std::to_string(lr));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    state_[i].m = Tensor<T>(params_[i].value().shape());
    state_[i].v = Tensor<T>(params_[i].value().shape());
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
void Adam<T>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.trainable()) continue;
    auto& s = state_[i];
    ++s.t;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
    T* w = p.value().data();
    const T* g = p.grad().data();
    T* m = s.m.data();
    T* v = s.v.data();
    const std::size_t n = p.value().size();
#pragma omp parallel for schedule(static) if (n > 16384)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(n); ++j) {
      m[j] = static_cast<T>(cfg_.beta1 * m[j] + (1 - cfg_.beta1) * g[j]);
      v[j] = static_cast<T>(cfg_.beta2 * v[j] + (1 - cfg_.beta2) * static_cast<double>(g[j]) * g[j]);
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] = static_cast<T>(w[j] - lr_ * mhat / (std::sqrt(vhat) + cfg_.epsilon));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace topogan::ad
