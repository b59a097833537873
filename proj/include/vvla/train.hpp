#pragma once

// Joint denoising objective and the training loop.

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "vvla/checkpoint.hpp"
#include "vvla/config.hpp"
#include "vvla/dataset.hpp"
#include "vvla/diffusion.hpp"
#include "vvla/gradcheck.hpp"
#include "vvla/model.hpp"
#include "vvla/optim.hpp"

namespace vvla {

struct LossParts {
  double total = 0;
  double video = 0;
  double action = 0;
};

// Per-modality mean squared errors combined by loss mode:
//   dual           video + lambda * action
//   no_video_loss  lambda * action
//   action_only    action
LossParts joint_loss(const MatrixF& eps_video, const MatrixF& pred_video, const MatrixF& eps_action,
                     const MatrixF& pred_action, LossMode mode, double lambda);

template <typename Scalar>
struct JointLossVars {
  Var<Scalar> total;
  Var<Scalar> video;   // absent without video tokens
  Var<Scalar> action;
};

template <typename Scalar>
JointLossVars<Scalar> joint_loss(const ModelOutput<Scalar>& out, const RowMatrix<Scalar>& eps_video,
                                 const std::vector<Scalar>& video_weight, const RowMatrix<Scalar>& eps_action,
                                 const std::vector<Scalar>& action_weight, LossMode mode, double lambda);

// A noised training batch: model inputs plus the regression targets.
template <typename Scalar>
struct NoisedBatch {
  ModelBatch<Scalar> input;
  RowMatrix<Scalar> eps_video;
  RowMatrix<Scalar> eps_action;
  std::vector<Scalar> video_weight;   // per future token row, 0 for padded latents
  std::vector<Scalar> action_weight;  // per action row, 0 for padding
};

// Assembles samples into clean model inputs, draws timesteps and noise from
// `rng` and returns the noised batch.
template <typename Scalar>
NoisedBatch<Scalar> make_noised_batch(const std::vector<TrainSample>& samples, const ModelConfig& cfg,
                                      const DiffusionSchedule& sched, TimestepMode mode, std::mt19937_64& rng);

// Clean observation latent rows (model range) for one frame.
MatrixF observation_tokens(const Frame& frame, const ModelConfig& cfg);

struct LossRow {
  int step = 0;
  float total = 0, video = 0, action = 0;
};

std::string loss_csv(const std::vector<LossRow>& rows);

struct TrainOptions {
  std::string out_dir;   // checkpoints and loss.csv; empty keeps everything in memory
  bool resume = true;    // continue from out_dir/checkpoint.vvck when present
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  Checkpoint checkpoint;  // parameters, optimiser state and config
  std::vector<LossRow> curve;
  int resumed_from = 0;
  // Accumulated gradient L2 norms of the output-head parameters.
  std::map<std::string, double> head_grad_norm;
};

ModelConfig model_config_for(const RunConfig& cfg);

TrainResult train(const RunConfig& cfg, const TrainDataset& data, const TrainOptions& opt = {});

// Model parameters stored in a checkpoint, without optimiser state.
ParamStore<float> model_params(const Checkpoint& ckpt);

// Finite-difference check of the full forward + joint loss on a reduced
// (d_model 16, 2 blocks) copy of `cfg` in double precision.
GradReport verify_model_gradients(const ModelConfig& cfg, LossMode mode, int n_probe, std::uint64_t seed);

}  // namespace vvla
