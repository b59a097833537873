#pragma once

// Multimodal diffusion transformer over one token sequence
//   [instruction tokens | observation latent | future latents | actions]
// with adaptive LayerNorm timestep modulation in every block. Future latents
// and actions are the noisy targets; the two output heads predict their noise.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vvla/autodiff.hpp"
#include "vvla/config.hpp"
#include "vvla/tensor.hpp"

namespace vvla {

enum class Modality : std::uint8_t { text, obs_latent, future_latent, action };

struct SequenceLayout {
  int text_begin = 0;
  int obs_begin = 0;
  int future_begin = 0;
  int action_begin = 0;
  int length = 0;

  explicit SequenceLayout(const ModelConfig& cfg);
  Modality modality(int pos) const;
};

template <typename Scalar>
struct ModelBatch {
  int batch = 0;
  std::vector<int> text;      // batch x text_len token ids
  RowMatrix<Scalar> obs;      // (batch * grid_tokens) x latent_channels, raster order
  RowMatrix<Scalar> future;   // (batch * future_tokens) x latent_channels; empty without video tokens
  RowMatrix<Scalar> actions;  // (batch * actions) x action_dim
  std::vector<int> t_video;   // per sample
  std::vector<int> t_action;  // per sample

  void validate(const ModelConfig& cfg) const;
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
  bool checked = false;           // abort on non-finite activations
  bool shared_condition = false;  // modulate every token with the video timestep embedding
  bool zero_positions = false;    // drop all positional embeddings (test ablation)
};

template <typename Scalar>
struct ModelOutput {
  Var<Scalar> tokens;  // sequence embedding fed to the first block
  Var<Scalar> video;   // (batch * future_tokens) x latent_channels, absent without video tokens
  Var<Scalar> action;  // (batch * actions) x action_dim
};

template <typename Scalar>
using BoundParams = std::map<std::string, Var<Scalar>>;

// Truncated-normal (sigma 0.02, cut at 2 sigma) weights and embeddings, zero
// biases, zero adaLN modulation projections and zero output heads.
ParamStore<float> init_params(const ModelConfig& cfg, std::uint64_t seed);

// Puts every parameter on the tape, as a differentiable leaf when trainable.
template <typename Scalar>
BoundParams<Scalar> bind_params(Tape<Scalar>& tape, const ParamStore<Scalar>& params, bool trainable);

// Embeds and concatenates the four segments; the result is what the first
// block consumes.
template <typename Scalar>
Var<Scalar> assemble_sequence(Tape<Scalar>& tape, const BoundParams<Scalar>& p, const ModelConfig& cfg,
                              const ModelBatch<Scalar>& in, const ForwardOptions& opt);

template <typename Scalar>
ModelOutput<Scalar> forward(Tape<Scalar>& tape, const BoundParams<Scalar>& p, const ModelConfig& cfg,
                            const ModelBatch<Scalar>& in, const ForwardOptions& opt = {});

// Inference without gradient bookkeeping.
template <typename Scalar>
struct NoisePrediction {
  RowMatrix<Scalar> video;
  RowMatrix<Scalar> action;
};

template <typename Scalar>
NoisePrediction<Scalar> predict_noise(const ParamStore<Scalar>& params, const ModelConfig& cfg,
                                      const ModelBatch<Scalar>& in, const ForwardOptions& opt = {});

// Sinusoidal timestep features, one row per timestep.
template <typename Scalar>
RowMatrix<Scalar> timestep_features(const std::vector<int>& t, int dim);

}  // namespace vvla
