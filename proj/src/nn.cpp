#include "topogan/nn.hpp"

namespace topogan::nn {

template <typename T>
void init_weights(ParamStore<T>& store, double std, Rng& rng) {
  if (!(std > 0)) throw ValueError("init_weights: std must be > 0, got " + std::to_string(std));
  std::normal_distribution<double> normal(0.0, std);
  for (const auto& e : store.entries()) {
    auto param = e.param;
    auto& v = param.value();
    switch (e.kind) {
      case ParamKind::weight:
        for (auto& x : v.vec()) x = static_cast<T>(normal(rng));
        break;
      case ParamKind::bn_scale:
        v.fill(T(1));
        break;
      case ParamKind::bias:
      case ParamKind::bn_shift:
        v.fill(T(0));
        break;
    }
  }
  for (const auto& b : store.buffers()) {
    b.stats->running_mean.fill(T(0));
    b.stats->running_var.fill(T(1));
    b.stats->updates = 0;
  }
}

template void init_weights<float>(ParamStore<float>&, double, Rng&);
template void init_weights<double>(ParamStore<double>&, double, Rng&);

}  // namespace topogan::nn
