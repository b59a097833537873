#pragma once

// Imagination versus execution: colour-centroid keypoints, trajectory
// matching and motion similarity between executed and imagined videos.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vvla/codec.hpp"
#include "vvla/rollout.hpp"
#include "vvla/sim.hpp"
#include "vvla/tensor.hpp"

namespace vvla {

using ScenePalette = std::vector<std::pair<int, Rgb>>;

inline constexpr float kDetectTolerance = 0.1f;

struct Detection {
  int id = 0;
  bool valid = false;
  float x = 0, y = 0;
  int pixels = 0;
  float elongation = 1;  // eigenvalue ratio of the pixel covariance
};

// One detection per palette entry, in palette order. Positions are in world
// units (pixel centres at (c + 0.5) / W).
std::vector<Detection> detect_keypoints(const Frame& frame, const ScenePalette& palette);

struct Trajectory {
  int id = 0;
  std::vector<float> x, y;
  std::vector<std::uint8_t> valid;
  // Frames with different segment numbers are never differenced; segments
  // separate the windows of successive replans.
  std::vector<int> segment;

  std::size_t frames() const { return valid.size(); }
  int valid_count() const;
};

using TrajectorySet = std::vector<Trajectory>;

TrajectorySet track(const std::vector<Frame>& frames, const ScenePalette& palette, int segment = 0);
// Appends `more` frame-wise onto `base`; ids must line up.
void append_frames(TrajectorySet& base, const TrajectorySet& more);

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
  double cost = 0;
};

// Minimum-cost assignment of min(n, m) pairs, O(n^2 m) for n <= m.
Assignment hungarian(const MatrixD& cost);

struct SimilarityReport {
  std::vector<std::pair<int, int>> pairs;  // matched (exec id, imag id)
  std::vector<double> cosines;             // per matched pair, NaN when both are static
  double mean = 0;
  int matched = 0;
  int unmatched_exec = 0, unmatched_imag = 0;
};

// Trajectories whose displacement vector is shorter than this are static.
inline constexpr double kStaticMotion = 0.5 * kPixel;

SimilarityReport motion_similarity(const TrajectorySet& exec, const TrajectorySet& imag);

// Evaluates the task predicate on centroids detected in the final imagined
// frame. Objects hidden in the final frame keep their last detected position.
bool judge_imagination(const LatentClip& imagined, const TaskSpec& task, const ScenePalette& palette, int patch = 4);
bool judge_frames(const std::vector<Frame>& frames, const TaskSpec& task, const ScenePalette& palette);

struct CorrelationReport {
  double mean_success = 0, mean_failure = 0;
  double difference = 0;
  double point_biserial = 0;
  double auroc = 0;
  int successes = 0, failures = 0;
};

CorrelationReport correlate(const std::vector<std::pair<double, bool>>& results);

struct TrialAnalysis {
  std::string id, task, split;
  std::optional<double> similarity;
  bool execution_success = false;
  bool imagination_success = false;
};

// Per-trial similarity over every replan window: imagined frames are
// truncated to the executed frames of the same window.
TrialAnalysis analyze_trial(const ArchivedTrial& trial, int patch = 4);

struct Analysis {
  std::vector<TrialAnalysis> trials;
  std::optional<CorrelationReport> correlation;
  std::string correlation_error;
  std::string to_csv() const;
  std::string to_svg() const;
};

Analysis analyze(const std::vector<ArchivedTrial>& trials, int patch = 4);

}  // namespace vvla
