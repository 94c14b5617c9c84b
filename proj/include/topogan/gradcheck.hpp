#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "topogan/autodiff.hpp"

namespace topogan::ad {

struct GradCheckOptions {
  double h_scale = 1e-5;            // h = h_scale * max(1, |value|)
  std::size_t coords_per_param = 0;  // 0 = every coordinate
  std::uint64_t seed = 0;            // coordinate sampling
};

// Max over checked coordinates of |analytic - central| / max(|analytic|, |central|, 1e-8).
// `loss` rebuilds the scalar objective from the current parameter values.
double grad_check(const std::function<Var<double>()>& loss, std::vector<Parameter<double>> params,
                  const GradCheckOptions& opts = {});

}  // namespace topogan::ad
