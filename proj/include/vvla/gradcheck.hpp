#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "vvla/tensor.hpp"

namespace vvla {

// Evaluates the loss at `params`. When `grads` is non-null it must also fill
// the analytic gradient of every parameter.
using LossFn = std::function<double(const ParamStore<double>& params, ParamStore<double>* grads)>;

struct GradReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  int probed = 0;
  int excluded = 0;  // analytic and finite-difference gradient both zero
  bool pass = false;
};

// Compares the analytic gradient with central differences
// (f(p+eps) - f(p-eps)) / (2 eps) on n_probe scalars drawn uniformly over all
// parameters.
GradReport check_gradients(const LossFn& loss_fn, const ParamStore<double>& params, int n_probe, double eps,
                           double rtol, std::uint64_t seed = 0);

}  // namespace vvla
