#include "topogan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace topogan::ad {

double grad_check(const std::function<Var<double>()>& loss, std::vector<Parameter<double>> params,
                  const GradCheckOptions& opts) {
  for (auto& p : params) p.zero_grad();
  backward(loss());
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());

  std::mt19937_64 rng(opts.seed);
  double worst = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& value = params[pi].value();
    std::vector<std::size_t> coords(value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.coords_per_param > 0 && opts.coords_per_param < coords.size()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.coords_per_param);
    }
    for (auto i : coords) {
      const double saved = value[i];
      const double h = opts.h_scale * std::max(1.0, std::abs(saved));
      value[i] = saved + h;
      const double up = loss().value()[0];
      value[i] = saved - h;
      const double down = loss().value()[0];
      value[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace topogan::ad
