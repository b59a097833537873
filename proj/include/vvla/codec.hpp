#pragma once

// Lossless causal frame <-> latent rearrangement with temporal rate 4.
//
// A clip of N = 4(n-1)+1 frames maps to n latent grids of h x w x c with
// h = H/p, w = W/p and c = p*p*C*4. The first latent holds the first frame
// replicated four times; latent j >= 2 packs frames 4(j-2)+1 .. 4(j-1)
// (0-based). Channel order within a latent cell is (time, dy, dx, colour).

#include <vector>

#include "vvla/sim.hpp"
#include "vvla/tensor.hpp"

namespace vvla {

inline constexpr int kTemporalRate = 4;

using Clip = Tensor<float>;         // N x H x W x C
using LatentClip = Tensor<float>;   // n x h x w x c

int n_latents(int frames);
int n_frames(int latents);

LatentClip encode(const Clip& clip, int patch);
Clip decode(const LatentClip& latents, int patch, int channels);

// One latent grid (h x w x c) as h*w row-major tokens.
MatrixF flatten_raster(const Tensor<float>& grid);
Tensor<float> unflatten_raster(const MatrixF& tokens, Index h, Index w);

// Rows of latent `j` of a clip, as tokens.
MatrixF latent_tokens(const LatentClip& latents, Index j);

Clip clip_from_frames(const std::vector<Frame>& frames);
Frame frame_at(const Clip& clip, Index i);

// [0, 1] pixel range <-> [-1, 1] diffusion range.
template <typename Derived>
auto to_model_range(const Eigen::MatrixBase<Derived>& x) {
  return (x.array() * typename Derived::Scalar(2) - typename Derived::Scalar(1)).matrix();
}
template <typename Derived>
auto from_model_range(const Eigen::MatrixBase<Derived>& x) {
  return ((x.array() + typename Derived::Scalar(1)) * typename Derived::Scalar(0.5)).matrix();
}

}  // namespace vvla
