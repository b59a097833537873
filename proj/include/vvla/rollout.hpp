#pragma once

// Closed-loop evaluation: predict an action chunk, execute a prefix, re-observe
// and replan until success or the replan budget runs out.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vvla/codec.hpp"
#include "vvla/config.hpp"
#include "vvla/diffusion.hpp"
#include "vvla/episode.hpp"
#include "vvla/partition.hpp"
#include "vvla/tensor.hpp"
#include "vvla/text.hpp"

namespace vvla {

struct PlanRequest {
  const Simulator* sim = nullptr;
  WorldState state;
  Frame observation;
  std::string instruction;
  std::uint64_t seed = 0;
};

struct Plan {
  std::vector<Action> actions;          // simulator units, K of them
  std::optional<LatentClip> imagined;   // [0, 1] latents including the observation latent
};

// Produces one plan per request. Implementations must be deterministic in the
// request contents.
class ChunkPolicy {
 public:
  virtual ~ChunkPolicy() = default;
  virtual std::vector<Plan> plan(const std::vector<PlanRequest>& requests) const = 0;
  virtual int horizon() const = 0;
};

// Diffusion policy backed by trained parameters.
class ModelPolicy : public ChunkPolicy {
 public:
  ModelPolicy(ParamStore<float> params, ModelConfig cfg, DiffusionConfig diffusion, int ddim_steps, InferMode mode);
  std::vector<Plan> plan(const std::vector<PlanRequest>& requests) const override;
  int horizon() const override { return cfg_.actions; }
  const ModelConfig& config() const { return cfg_; }

 private:
  ParamStore<float> params_;
  ModelConfig cfg_;
  DiffusionSchedule sched_;
  int steps_;
  InferMode mode_;
  Vocab vocab_;
};

// Scripted expert looked ahead K steps; its imagination is the true future.
class ExpertPolicy : public ChunkPolicy {
 public:
  explicit ExpertPolicy(int horizon, int patch = 4) : horizon_(horizon), patch_(patch) {}
  std::vector<Plan> plan(const std::vector<PlanRequest>& requests) const override;
  int horizon() const override { return horizon_; }

 private:
  int horizon_, patch_;
};

// Uniform random actions over the normalised action box.
class RandomPolicy : public ChunkPolicy {
 public:
  explicit RandomPolicy(int horizon) : horizon_(horizon) {}
  std::vector<Plan> plan(const std::vector<PlanRequest>& requests) const override;
  int horizon() const override { return horizon_; }

 private:
  int horizon_;
};

struct TrialSpec {
  SplitName split = SplitName::in_domain;
  Cell cell;
  TaskSpec task;
  int index = 0;  // trial index within the cell
  std::uint64_t seed = 0;
};

struct TrialResult {
  TrialSpec spec;
  bool success = false;
  std::string error;                 // non-empty when the simulator rejected an action
  Episode executed;                  // executed frames, actions and keypoints
  std::vector<int> replan_frames;    // first executed frame of every replan
  std::vector<LatentClip> imagined;  // one per replan when the policy imagines
  int replans = 0;
};

struct RolloutOptions {
  int execute = 3;
  int max_replans = 20;
  int batch = 32;  // trials advanced together per policy call
  int jobs = 1;
};

TrialResult run_trial(const ChunkPolicy& policy, const TrialSpec& spec, const RolloutOptions& opt);
std::vector<TrialResult> run_trials(const ChunkPolicy& policy, const std::vector<TrialSpec>& specs,
                                    const RolloutOptions& opt);

struct SuccessRow {
  std::string split, task, embodiment;
  int trials = 0, successes = 0;
  double rate() const { return trials ? static_cast<double>(successes) / trials : 0.0; }
};

struct SuccessTable {
  std::vector<SuccessRow> rows;  // per (skill, embodiment) cell
  SuccessRow average;            // pooled over all cells
  std::string to_csv() const;
};

std::vector<TrialSpec> make_trials(const SplitSpec& split, int trials_per_task, std::uint64_t seed);

struct Evaluation {
  SuccessTable table;
  std::vector<TrialResult> trials;
};

Evaluation evaluate(const ChunkPolicy& policy, const SplitSpec& split, int trials_per_task, std::uint64_t seed,
                    const RolloutOptions& opt);

// Archive layout: success.csv, trials.jsonl, episodes/<id>.vvla and
// imagined/<id>_r<k>.vvlt (u32 rank, u32 extents, f32 payload).
void write_archive(const std::string& dir, const Evaluation& ev);

struct ArchivedTrial {
  TrialSpec spec;
  bool success = false;
  std::string error;
  std::string id;
  Episode executed;
  std::vector<int> replan_frames;
  std::vector<LatentClip> imagined;
};
std::vector<ArchivedTrial> read_archive(const std::string& dir);

std::vector<std::uint8_t> encode_latents(const LatentClip& clip);
LatentClip decode_latents(const std::vector<std::uint8_t>& bytes);

}  // namespace vvla
