#include "vvla/diffusion.hpp"

#include <string>

#include "vvla/seeding.hpp"

namespace vvla {

DiffusionSchedule::DiffusionSchedule(int steps, double beta_min, double beta_max) : steps_(steps) {
  if (steps < 1) throw UsageError("diffusion steps must be at least 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
    throw UsageError("beta range must satisfy 0 < beta_min <= beta_max < 1");
  beta_.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  alpha_bar_.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
    const auto i = static_cast<std::size_t>(t);
    beta_[i] = beta_min + (beta_max - beta_min) * frac;
    alpha_bar_[i] = alpha_bar_[i - 1] * (1.0 - beta_[i]);
  }
}

TimestepPair sample_timesteps(TimestepMode mode, int steps, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(1, steps);
  const int tv = u(rng);
  if (mode == TimestepMode::sync) return {tv, tv};
  return {tv, u(rng)};
}

std::vector<int> ddim_timesteps(int total, int steps) {
  if (steps < 1 || steps > total) throw UsageError("sampling steps must lie in [1, T]");
  std::vector<int> ts(static_cast<std::size_t>(steps));
  for (int i = 1; i <= steps; ++i)
    ts[static_cast<std::size_t>(i - 1)] =
        static_cast<int>((static_cast<std::int64_t>(i) * total) / steps);
  return ts;
}

namespace {

// One deterministic DDIM update of x from t to t_prev given predicted noise.
void ddim_update(MatrixF& x, const MatrixF& eps, int t, int t_prev, const DiffusionSchedule& sched) {
  const double ab = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t_prev);
  const auto sa = static_cast<float>(std::sqrt(ab)), sb = static_cast<float>(std::sqrt(1.0 - ab));
  MatrixF x0 = ((x - sb * eps) / sa).cwiseMax(-1.f).cwiseMin(1.f);
  x = static_cast<float>(std::sqrt(ab_prev)) * x0 + static_cast<float>(std::sqrt(1.0 - ab_prev)) * eps;
}

void require_finite(const JointState& s, int step) {
  if (!s.video.allFinite() || !s.action.allFinite())
    throw NumericalError("non-finite value in DDIM step " + std::to_string(step));
}

}  // namespace

JointState ddim_sample(const EpsModel& model, const DiffusionSchedule& sched, const SampleRequest& req) {
  if (req.batch < 1) throw UsageError("sample batch must be positive");
  if (static_cast<int>(req.seeds.size()) != req.batch) throw UsageError("one seed per sample required");
  const std::vector<int> ts = ddim_timesteps(sched.steps(), req.steps);
  const auto b = static_cast<std::size_t>(req.batch);

  JointState x{MatrixF(req.batch * req.video_rows, req.video_cols), MatrixF(req.batch * req.action_rows, req.action_cols)};
  for (int i = 0; i < req.batch; ++i) {
    std::mt19937_64 rng(derive_seed(req.seeds[static_cast<std::size_t>(i)], 0xdd1));
    MatrixF v(req.video_rows, req.video_cols), a(req.action_rows, req.action_cols);
    fill_normal(v, rng);
    fill_normal(a, rng);
    x.video.middleRows(i * req.video_rows, req.video_rows) = v;
    x.action.middleRows(i * req.action_rows, req.action_rows) = a;
  }

  const int T = sched.steps();
  int counter = 0;
  auto sweep = [&](bool video, bool action, int t_other_video, int t_other_action) {
    for (std::size_t k = ts.size(); k-- > 0;) {
      const int t = ts[k];
      const int t_prev = k == 0 ? 0 : ts[k - 1];
      const std::vector<int> tv(b, video ? t : t_other_video), ta(b, action ? t : t_other_action);
      const JointState eps = model(x, tv, ta);
      if (video) ddim_update(x.video, eps.video, t, t_prev, sched);
      if (action) ddim_update(x.action, eps.action, t, t_prev, sched);
      require_finite(x, counter++);
    }
  };

  if (req.mode == InferMode::joint || x.video.size() == 0) {
    sweep(x.video.size() != 0, true, 0, 0);
  } else {
    sweep(true, false, 0, T);   // video with actions left at pure noise
    sweep(false, true, 0, 0);   // actions given the clean video
  }
  return x;
}

}  // namespace vvla
