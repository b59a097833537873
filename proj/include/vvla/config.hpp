#pragma once

// Run configuration: an INI-style text file with [model], [diffusion],
// [train], [rollout] and [data] sections. Every key has a default; unknown
// keys are rejected so typos do not silently fall back to defaults.

#include <cstdint>
#include <string>
#include <vector>

#include "vvla/errors.hpp"

namespace vvla {

enum class MaskMode { bidirectional, causal };
enum class TimestepMode { sync, async };
enum class InferMode { joint, two_stage };
enum class LossMode { dual, no_video_loss, action_only };

std::string to_string(MaskMode m);
std::string to_string(TimestepMode m);
std::string to_string(InferMode m);
std::string to_string(LossMode m);
MaskMode parse_mask_mode(const std::string& s);
TimestepMode parse_timestep_mode(const std::string& s);
InferMode parse_infer_mode(const std::string& s);
LossMode parse_loss_mode(const std::string& s);

struct ModelConfig {
  int d_model = 128;
  int n_heads = 4;
  int n_blocks = 6;
  int mlp_ratio = 4;
  int text_len = 16;
  int vocab_size = 0;  // filled from the instruction vocabulary
  int frame_size = 32;
  int channels = 3;
  int patch = 4;
  int n_latents = 4;
  int actions = 6;
  int action_dim = 7;
  MaskMode mask = MaskMode::bidirectional;
  double dropout = 0.0;
  bool video_tokens = true;  // false for the action-only ablation

  int grid() const { return frame_size / patch; }
  int grid_tokens() const { return grid() * grid(); }
  int latent_channels() const { return patch * patch * channels * 4; }
  int future_tokens() const { return video_tokens ? (n_latents - 1) * grid_tokens() : 0; }
  int seq_len() const { return text_len + grid_tokens() + future_tokens() + actions; }
  int frames() const { return 4 * (n_latents - 1) + 1; }

  void validate() const;
};

struct DiffusionConfig {
  int train_steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  TimestepMode timesteps = TimestepMode::sync;
};

struct TrainConfig {
  LossMode loss_mode = LossMode::dual;
  double lambda = 1.0;
  int batch = 32;
  int steps = 10000;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  int stride = 2;
  int checkpoint_every = 1000;
  int log_every = 50;
  std::string skills = "all";  // comma-separated skill filter over the training partition
};

struct RolloutConfig {
  int execute = 3;
  int max_replans = 20;
  int ddim_steps = 50;
  InferMode infer_mode = InferMode::joint;
  int trials = 50;
  int batch = 32;  // trials advanced in lockstep per model call
  std::uint64_t seed = 0;
};

struct DataConfig {
  int episodes_per_cell = 600;
  int max_steps = 60;
  std::uint64_t seed = 0;
};

struct RunConfig {
  ModelConfig model;
  DiffusionConfig diffusion;
  TrainConfig train;
  RolloutConfig rollout;
  DataConfig data;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
// Canonical text form; parse_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& c);

// Applies "section.key=value" overrides on top of an existing config.
void apply_override(RunConfig& c, const std::string& section, const std::string& key, const std::string& value);

}  // namespace vvla
