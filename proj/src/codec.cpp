#include "vvla/codec.hpp"

#include <string>

#include "vvla/errors.hpp"

namespace vvla {

int n_latents(int frames) {
  if (frames < 1 || (frames - 1) % kTemporalRate != 0)
    throw DataError("frame count " + std::to_string(frames) + " is not 1 mod 4");
  return (frames - 1) / kTemporalRate + 1;
}

int n_frames(int latents) {
  if (latents < 1) throw DataError("latent count must be positive");
  return kTemporalRate * (latents - 1) + 1;
}

namespace {

struct Geometry {
  Index frames, height, width, channels, patch, h, w, c;
};

Geometry clip_geometry(const Clip& clip, int patch) {
  if (clip.rank() != 4) throw DataError("clip must be N x H x W x C");
  if (patch < 1) throw DataError("patch must be positive");
  const auto& s = clip.shape();
  if (s[1] % patch != 0 || s[2] % patch != 0) throw DataError("frame size not divisible by patch");
  n_latents(static_cast<int>(s[0]));
  return {s[0], s[1], s[2], s[3], patch, s[1] / patch, s[2] / patch, Index{patch} * patch * s[3] * kTemporalRate};
}

Index pixel_index(const Geometry& g, Index f, Index y, Index x, Index ch) {
  return ((f * g.height + y) * g.width + x) * g.channels + ch;
}

Index latent_index(const Geometry& g, Index j, Index gy, Index gx, Index t, Index dy, Index dx, Index ch) {
  const Index c = ((t * g.patch + dy) * g.patch + dx) * g.channels + ch;
  return ((j * g.h + gy) * g.w + gx) * g.c + c;
}

// Source frame of temporal slot t in latent j.
Index source_frame(Index j, Index t) { return j == 0 ? 0 : kTemporalRate * (j - 1) + 1 + t; }

}  // namespace

LatentClip encode(const Clip& clip, int patch) {
  const Geometry g = clip_geometry(clip, patch);
  const Index n = n_latents(static_cast<int>(g.frames));
  LatentClip out({n, g.h, g.w, g.c});
  for (Index j = 0; j < n; ++j)
    for (Index t = 0; t < kTemporalRate; ++t)
      for (Index gy = 0; gy < g.h; ++gy)
        for (Index dy = 0; dy < g.patch; ++dy)
          for (Index gx = 0; gx < g.w; ++gx)
            for (Index dx = 0; dx < g.patch; ++dx)
              for (Index ch = 0; ch < g.channels; ++ch)
                out[latent_index(g, j, gy, gx, t, dy, dx, ch)] =
                    clip[pixel_index(g, source_frame(j, t), gy * g.patch + dy, gx * g.patch + dx, ch)];
  return out;
}

Clip decode(const LatentClip& latents, int patch, int channels) {
  if (latents.rank() != 4) throw DataError("latents must be n x h x w x c");
  if (patch < 1 || channels < 1) throw DataError("patch and channels must be positive");
  const auto& s = latents.shape();
  if (s[3] != Index{patch} * patch * channels * kTemporalRate) throw DataError("latent channel count mismatch");
  const Index n = s[0];
  const Geometry g{n_frames(static_cast<int>(n)), s[1] * patch, s[2] * patch, channels, patch, s[1], s[2], s[3]};
  Clip out({g.frames, g.height, g.width, g.channels});
  for (Index gy = 0; gy < g.h; ++gy)
    for (Index dy = 0; dy < g.patch; ++dy)
      for (Index gx = 0; gx < g.w; ++gx)
        for (Index dx = 0; dx < g.patch; ++dx)
          for (Index ch = 0; ch < g.channels; ++ch) {
            const Index y = gy * g.patch + dy, x = gx * g.patch + dx;
            auto rep = [&](Index t) { return latents[latent_index(g, 0, gy, gx, t, dy, dx, ch)]; };
            // Pairwise sum keeps four equal replicas exact.
            out[pixel_index(g, 0, y, x, ch)] = ((rep(0) + rep(1)) + (rep(2) + rep(3))) * 0.25f;
            for (Index j = 1; j < n; ++j)
              for (Index t = 0; t < kTemporalRate; ++t)
                out[pixel_index(g, source_frame(j, t), y, x, ch)] = latents[latent_index(g, j, gy, gx, t, dy, dx, ch)];
          }
  return out;
}

MatrixF flatten_raster(const Tensor<float>& grid) {
  if (grid.rank() != 3) throw DataError("latent grid must be h x w x c");
  const auto& s = grid.shape();
  return Eigen::Map<const MatrixF>(grid.data(), s[0] * s[1], s[2]);
}

Tensor<float> unflatten_raster(const MatrixF& tokens, Index h, Index w) {
  if (tokens.rows() != h * w) throw DataError("token count does not match grid");
  Tensor<float> out({h, w, tokens.cols()});
  out.matrix() = Eigen::Map<const MatrixF>(tokens.data(), h * w, tokens.cols());
  return out;
}

MatrixF latent_tokens(const LatentClip& latents, Index j) {
  if (latents.rank() != 4) throw DataError("latents must be n x h x w x c");
  const auto& s = latents.shape();
  if (j < 0 || j >= s[0]) throw DataError("latent index out of range");
  const Index per = s[1] * s[2] * s[3];
  return Eigen::Map<const MatrixF>(latents.data() + j * per, s[1] * s[2], s[3]);
}

Clip clip_from_frames(const std::vector<Frame>& frames) {
  const Index n = static_cast<Index>(frames.size());
  Clip out({n, kFrameSize, kFrameSize, kFrameChannels});
  const Index per = kFrameSize * kFrameSize * kFrameChannels;
  for (Index i = 0; i < n; ++i)
    std::copy(frames[static_cast<std::size_t>(i)].pixels.begin(), frames[static_cast<std::size_t>(i)].pixels.end(),
              out.data() + i * per);
  return out;
}

Frame frame_at(const Clip& clip, Index i) {
  const auto& s = clip.shape();
  if (clip.rank() != 4 || s[1] != kFrameSize || s[2] != kFrameSize || s[3] != kFrameChannels)
    throw DataError("clip frames are not 32x32x3");
  if (i < 0 || i >= s[0]) throw DataError("frame index out of range");
  Frame f;
  const Index per = kFrameSize * kFrameSize * kFrameChannels;
  std::copy(clip.data() + i * per, clip.data() + (i + 1) * per, f.pixels.begin());
  return f;
}

}  // namespace vvla
