#pragma once

// DDPM forward noising and the deterministic DDIM sampler over the joint
// (video latent, action) state. Everything lives in the [-1, 1] range.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "vvla/config.hpp"
#include "vvla/errors.hpp"
#include "vvla/tensor.hpp"

namespace vvla {

class DiffusionSchedule {
 public:
  DiffusionSchedule(int steps, double beta_min, double beta_max);
  static DiffusionSchedule from_config(const DiffusionConfig& c) {
    return {c.train_steps, c.beta_min, c.beta_max};
  }

  int steps() const { return steps_; }
  // Tables have steps()+1 entries; index 0 is the clean state.
  double beta(int t) const { return beta_[check(t)]; }
  double alpha(int t) const { return 1.0 - beta_[check(t)]; }
  double alpha_bar(int t) const { return alpha_bar_[check(t)]; }

 private:
  std::size_t check(int t) const {
    if (t < 0 || t > steps_) throw UsageError("timestep " + std::to_string(t) + " out of range");
    return static_cast<std::size_t>(t);
  }
  int steps_;
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

inline DiffusionSchedule build_schedule(int steps, double beta_min, double beta_max) {
  return {steps, beta_min, beta_max};
}

// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
template <typename DerivedX, typename DerivedE>
auto add_noise(const Eigen::MatrixBase<DerivedX>& x0, const Eigen::MatrixBase<DerivedE>& eps, int t,
               const DiffusionSchedule& sched) {
  using Scalar = typename DerivedX::Scalar;
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw DataError("add_noise: shape mismatch");
  const double ab = sched.alpha_bar(t);
  const auto a = static_cast<Scalar>(std::sqrt(ab));
  const auto b = static_cast<Scalar>(std::sqrt(1.0 - ab));
  return RowMatrix<Scalar>(a * x0.derived() + b * eps.derived());
}

struct TimestepPair {
  int video = 0;
  int action = 0;
};

TimestepPair sample_timesteps(TimestepMode mode, int steps, std::mt19937_64& rng);

// Fills a matrix with standard normal draws.
template <typename Scalar>
void fill_normal(RowMatrix<Scalar>& m, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(n(rng));
}

struct JointState {
  MatrixF video;   // batch * video_rows x video_cols (may be empty)
  MatrixF action;  // batch * action_rows x action_cols
};

// Noise prediction for a batch at per-sample timesteps.
using EpsModel =
    std::function<JointState(const JointState& x, const std::vector<int>& t_video, const std::vector<int>& t_action)>;

struct SampleRequest {
  int batch = 1;
  Index video_rows = 0;  // per sample
  Index video_cols = 0;
  Index action_rows = 0;  // per sample
  Index action_cols = 0;
  std::vector<std::uint64_t> seeds;  // one per sample
  int steps = 50;
  InferMode mode = InferMode::joint;
};

// Evenly spaced sub-schedule t_1 < ... < t_steps = T.
std::vector<int> ddim_timesteps(int total, int steps);

// Deterministic (eta = 0) DDIM from seeded Gaussian noise. Predicted clean
// states are clamped to [-1, 1] at every step.
JointState ddim_sample(const EpsModel& model, const DiffusionSchedule& sched, const SampleRequest& req);

}  // namespace vvla
