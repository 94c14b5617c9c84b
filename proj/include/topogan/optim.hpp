#pragma once

#include <vector>

#include "topogan/autodiff.hpp"

namespace topogan::ad {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  Tensor<T> m;
  Tensor<T> v;
  long t = 0;
};

// Bias-corrected Adam over a fixed parameter list. Moments are created
// lazily with the parameter shapes; the list order is the state order.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>> params, double lr, AdamConfig cfg = {});

  void zero_grad();
  void step();

  double lr() const { return lr_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<AdamState<T>>& state() const { return state_; }
  std::vector<Parameter<T>>& params() { return params_; }

 private:
  std::vector<Parameter<T>> params_;
  std::vector<AdamState<T>> state_;
  double lr_;
  AdamConfig cfg_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace topogan::ad
