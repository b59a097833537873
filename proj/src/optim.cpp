#include "vvla/optim.hpp"

#include <cmath>

namespace vvla {

void adam_step(ParamStore<float>& params, const ParamStore<float>& grads, AdamState& state,
               const AdamOptions& opt) {
  for (const auto& [name, p] : params) {
    if (!grads.contains(name)) throw DataError("missing gradient for parameter " + name);
    if (grads.at(name).shape() != p.shape()) throw DataError("gradient shape mismatch for " + name);
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    if (!state.m.contains(name)) {
      state.m.add(name, Tensor<float>(p.shape()));
      state.v.add(name, Tensor<float>(p.shape()));
    }
    auto m = state.m.at(name).flat();
    auto v = state.v.at(name).flat();
    auto g = grads.at(name).flat();
    auto x = p.flat();
    m = float(opt.beta1) * m + float(1.0 - opt.beta1) * g;
    v = float(opt.beta2) * v + float(1.0 - opt.beta2) * g.cwiseAbs2();
    x *= float(1.0 - opt.lr * opt.weight_decay);
    x.array() -= float(opt.lr) * (m.array() / float(bc1)) / ((v.array() / float(bc2)).sqrt() + float(opt.eps));
  }
}

}  // namespace vvla
