#pragma once

#include "vvla/tensor.hpp"

namespace vvla {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// First/second moment estimates, keyed like the parameters they track.
struct AdamState {
  ParamStore<float> m;
  ParamStore<float> v;
  std::int64_t step = 0;
};

// One AdamW update with decoupled weight decay and bias-corrected moments.
// Every parameter must have a gradient of the same shape.
void adam_step(ParamStore<float>& params, const ParamStore<float>& grads, AdamState& state,
               const AdamOptions& opt);

}  // namespace vvla
