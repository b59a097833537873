#include <doctest.h>

#include <cmath>
#include <random>

#include "vvla/diffusion.hpp"
#include "vvla/seeding.hpp"

using namespace vvla;

TEST_CASE("schedule tables") {
  const DiffusionSchedule one(1, 0.5, 0.5);
  CHECK(one.alpha_bar(0) == 1.0);
  CHECK(one.alpha_bar(1) == doctest::Approx(0.5));
  const DiffusionSchedule s(1000, 1e-4, 0.02);
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.alpha_bar(1000) < 1e-4);
  CHECK(s.beta(1) == doctest::Approx(1e-4));
  CHECK(s.beta(1000) == doctest::Approx(0.02));
  for (int t = 1; t <= 1000; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  CHECK_THROWS_AS(DiffusionSchedule(0, 1e-4, 0.02), UsageError);
  CHECK_THROWS_AS(DiffusionSchedule(10, 0.02, 1e-4), UsageError);
  CHECK_THROWS_AS(DiffusionSchedule(10, 0.0, 0.02), UsageError);
  CHECK_THROWS_AS(DiffusionSchedule(10, 1e-4, 1.0), UsageError);
  CHECK_THROWS_AS(s.alpha_bar(1001), UsageError);
}

TEST_CASE("add_noise examples") {
  const DiffusionSchedule s(1000, 1e-4, 0.02);
  MatrixD x0(1, 2), eps(1, 2);
  x0 << 0.3, -0.7;
  eps << 1.1, 0.4;
  CHECK(add_noise(x0, eps, 0, s) == x0);
  const MatrixD xt = add_noise(x0, eps, 1000, s);
  CHECK((xt - eps).cwiseAbs().maxCoeff() < 0.02);

  // alpha_bar = 0.25 on a one-step schedule with beta = 0.75.
  const DiffusionSchedule q(1, 0.75, 0.75);
  MatrixD z(1, 1), e(1, 1);
  z << 0.0;
  e << 1.0;
  CHECK(add_noise(z, e, 1, q)(0, 0) == doctest::Approx(std::sqrt(0.75)));
}

TEST_CASE("timestep sampling modes") {
  std::mt19937_64 rng(1);
  int differ = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto s = sample_timesteps(TimestepMode::sync, 1000, rng);
    CHECK(s.video == s.action);
    CHECK(s.video >= 1);
    CHECK(s.video <= 1000);
    const auto a = sample_timesteps(TimestepMode::async, 1000, rng);
    differ += a.video != a.action;
  }
  CHECK(differ > 900);
  for (int i = 0; i < 20; ++i) {
    const auto t = sample_timesteps(TimestepMode::async, 1, rng);
    CHECK(t.video == 1);
    CHECK(t.action == 1);
  }
}

TEST_CASE("noising moments at a few timesteps") {
  const DiffusionSchedule s(1000, 1e-4, 0.02);
  std::mt19937_64 rng(2);
  const double x0 = 0.6;
  for (int t : {1, 250, 1000}) {
    MatrixD eps(20000, 1);
    fill_normal(eps, rng);
    const MatrixD xt = add_noise(MatrixD::Constant(20000, 1, x0), eps, t, s);
    const double mean = xt.mean();
    const double var = (xt.array() - mean).square().mean();
    CHECK(std::abs(mean - std::sqrt(s.alpha_bar(t)) * x0) < 0.02);
    CHECK(std::abs(var - (1 - s.alpha_bar(t))) < 0.05);
  }
}

TEST_CASE("DDIM sub-schedule") {
  CHECK(ddim_timesteps(1000, 1000).front() == 1);
  CHECK(ddim_timesteps(1000, 1000).back() == 1000);
  CHECK(ddim_timesteps(1000, 10) == std::vector<int>{100, 200, 300, 400, 500, 600, 700, 800, 900, 1000});
  CHECK_THROWS_AS(ddim_timesteps(1000, 0), UsageError);
  CHECK_THROWS_AS(ddim_timesteps(1000, 1001), UsageError);
}

namespace {

struct Oracle {
  const DiffusionSchedule* sched;
  JointState x0;
  JointState operator()(const JointState& x, const std::vector<int>& tv, const std::vector<int>& ta) const {
    JointState e{x.video, x.action};
    const Index vr = x.video.rows() / static_cast<Index>(tv.size());
    const Index ar = x.action.rows() / static_cast<Index>(ta.size());
    for (std::size_t b = 0; b < tv.size(); ++b) {
      auto one = [&](MatrixF& out, const MatrixF& xt, const MatrixF& clean, Index rows, int t) {
        if (rows == 0) return;
        const double ab = sched->alpha_bar(t);
        const auto blk = static_cast<Index>(b) * rows;
        out.middleRows(blk, rows) =
            ((xt.middleRows(blk, rows).cast<double>() - std::sqrt(ab) * clean.middleRows(blk, rows).cast<double>()) /
             std::sqrt(std::max(1.0 - ab, 1e-300)))
                .cast<float>();
      };
      one(e.video, x.video, x0.video, vr, tv[b]);
      one(e.action, x.action, x0.action, ar, ta[b]);
    }
    return e;
  }
};

SampleRequest request(int steps, InferMode mode) {
  SampleRequest r;
  r.batch = 2;
  r.video_rows = 3;
  r.video_cols = 4;
  r.action_rows = 2;
  r.action_cols = 7;
  r.seeds = {11, 12};
  r.steps = steps;
  r.mode = mode;
  return r;
}

JointState targets(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.95f, 0.95f);
  JointState x{MatrixF(6, 4), MatrixF(4, 7)};
  for (Index i = 0; i < x.video.size(); ++i) x.video.data()[i] = u(rng);
  for (Index i = 0; i < x.action.size(); ++i) x.action.data()[i] = u(rng);
  return x;
}

}  // namespace

TEST_CASE("DDIM with an oracle recovers the clean state") {
  const DiffusionSchedule s(1000, 1e-4, 0.02);
  const JointState x0 = targets(3);
  const EpsModel oracle = Oracle{&s, x0};
  for (InferMode mode : {InferMode::joint, InferMode::two_stage}) {
    const JointState out = ddim_sample(oracle, s, request(1000, mode));
    CHECK((out.video - x0.video).cwiseAbs().maxCoeff() < 1e-4);
    CHECK((out.action - x0.action).cwiseAbs().maxCoeff() < 1e-4);
  }
  const JointState few = ddim_sample(oracle, s, request(10, InferMode::joint));
  CHECK((few.action - x0.action).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("DDIM is seeded, clamped and independent of global RNG state") {
  const DiffusionSchedule s(1000, 1e-4, 0.02);
  const EpsModel zero = [](const JointState& x, const std::vector<int>&, const std::vector<int>&) {
    return JointState{MatrixF::Zero(x.video.rows(), x.video.cols()), MatrixF::Zero(x.action.rows(), x.action.cols())};
  };
  const JointState a = ddim_sample(zero, s, request(50, InferMode::joint));
  std::srand(99);
  std::mt19937_64 unrelated(5);
  (void)unrelated();
  const JointState b = ddim_sample(zero, s, request(50, InferMode::joint));
  CHECK(a.video == b.video);
  CHECK(a.action == b.action);
  CHECK(a.video.cwiseAbs().maxCoeff() <= 1.f);
  CHECK(a.action.cwiseAbs().maxCoeff() <= 1.f);
  auto other = request(50, InferMode::joint);
  other.seeds = {11, 13};
  const JointState c = ddim_sample(zero, s, other);
  CHECK(c.action.topRows(2) == a.action.topRows(2));
  CHECK_FALSE(c.action.bottomRows(2) == a.action.bottomRows(2));
}

TEST_CASE("DDIM aborts on non-finite model output with the step index") {
  const DiffusionSchedule s(1000, 1e-4, 0.02);
  const EpsModel bad = [](const JointState& x, const std::vector<int>&, const std::vector<int>&) {
    JointState e{MatrixF::Zero(x.video.rows(), x.video.cols()), MatrixF::Zero(x.action.rows(), x.action.cols())};
    e.action(0, 0) = std::nanf("");
    return e;
  };
  try {
    ddim_sample(bad, s, request(10, InferMode::joint));
    FAIL("expected an abort");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("two-stage sampling holds actions at pure noise while denoising video") {
  const DiffusionSchedule s(100, 1e-4, 0.02);
  std::vector<std::pair<int, int>> calls;
  const EpsModel spy = [&](const JointState& x, const std::vector<int>& tv, const std::vector<int>& ta) {
    calls.emplace_back(tv[0], ta[0]);
    return JointState{MatrixF::Zero(x.video.rows(), x.video.cols()), MatrixF::Zero(x.action.rows(), x.action.cols())};
  };
  ddim_sample(spy, s, request(4, InferMode::two_stage));
  REQUIRE(calls.size() == 8);
  for (int i = 0; i < 4; ++i) {
    CHECK(calls[static_cast<std::size_t>(i)].second == 100);
    CHECK(calls[static_cast<std::size_t>(4 + i)].first == 0);
  }
  CHECK(calls[0].first == 100);
  CHECK(calls[4].second == 100);
  calls.clear();
  ddim_sample(spy, s, request(4, InferMode::joint));
  REQUIRE(calls.size() == 4);
  for (const auto& [v, a] : calls) CHECK(v == a);
}
