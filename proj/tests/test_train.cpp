#include <doctest.h>

#include <filesystem>

#include "vvla/dataset.hpp"
#include "vvla/episode.hpp"
#include "vvla/partition.hpp"
#include "vvla/train.hpp"

using namespace vvla;
namespace fs = std::filesystem;

namespace {

Episode synthetic_episode(int actions) {
  Episode ep;
  ep.instruction = "topple the red bottle";
  ep.task = static_cast<std::uint8_t>(Skill::topple);
  for (int i = 0; i <= 2 * actions; ++i) {
    Frame f;
    f.at(0, 0, 0) = static_cast<float>(i % 7) / 7.f;
    ep.frames.push_back(f);
  }
  for (int i = 0; i < actions; ++i) {
    Action a{};
    a[3] = 0.01f * static_cast<float>(i);
    a[6] = 1.f;
    ep.actions.push_back(a);
  }
  return ep;
}

std::vector<Episode> expert_episodes(int count) {
  std::vector<Episode> eps;
  for (int i = 0; i < count; ++i) {
    const TaskSpec task = sample_task(Skill::pick_place, full_attribute_pool(), static_cast<std::uint64_t>(i));
    const Simulator sim(task, i % 2 ? EmbodimentSpec::B() : EmbodimentSpec::A());
    eps.push_back(expert_episode(sim, static_cast<std::uint64_t>(i), 60));
  }
  return eps;
}

RunConfig tiny_run(LossMode mode) {
  RunConfig c;
  c.model.d_model = 16;
  c.model.n_heads = 2;
  c.model.n_blocks = 1;
  c.model.n_latents = 2;
  c.model.actions = 2;
  c.train.loss_mode = mode;
  c.train.batch = 2;
  c.train.steps = 4;
  c.train.log_every = 1;
  c.train.checkpoint_every = 2;
  c.train.lr = 1e-3;
  c.train.seed = 7;
  return c;
}

TrainDataset tiny_data(const RunConfig& c) {
  return build_dataset(expert_episodes(4), c.model.frames(), c.model.actions, c.train.stride, Vocab::standard(),
                       c.model.text_len);
}

}  // namespace

TEST_CASE("window arithmetic") {
  const Vocab v = Vocab::standard();
  TrainDataset one(13, 6, 1, 16);
  one.add(synthetic_episode(6), v);
  CHECK(one.size() == 1);

  TrainDataset four(13, 6, 4, 16);
  four.add(synthetic_episode(12), v);
  REQUIRE(four.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(four.window(static_cast<std::size_t>(i)).offset == 4 * i);

  // 27 frames: offsets 0, 4, 8, 12 fit; frames 25 and 26 need a padded window at 16.
  TrainDataset padded(13, 6, 4, 16);
  padded.add(synthetic_episode(13), v);
  REQUIRE(padded.size() == 5);
  CHECK(padded.window(4).offset == 16);
  const TrainSample s = padded.sample(4);
  CHECK(s.frame_valid[10] == 1);
  CHECK(s.frame_valid[11] == 0);
  CHECK(s.action_valid[4] == 1);
  CHECK(s.action_valid[5] == 0);
  CHECK(frame_at(s.clip, 12) == frame_at(s.clip, 10));
  CHECK(s.actions.row(5) == s.actions.row(4));

  TrainDataset shorter(13, 6, 2, 16);
  shorter.add(synthetic_episode(5), v);
  CHECK(shorter.size() == 0);
  CHECK(shorter.skipped_short() == 1);
  CHECK_THROWS_AS(build_dataset({synthetic_episode(5)}, 13, 6, 2, v, 16), DataError);
}

TEST_CASE("windows decode to the recorded frames and normalised actions") {
  const Episode ep = expert_episodes(1).front();
  TrainDataset d(13, 6, 2, 16);
  d.add(ep, Vocab::standard());
  REQUIRE(d.size() > 1);
  const TrainSample s = d.sample(1);
  const int off = d.window(1).offset;
  CHECK(off == 2);
  for (int i = 0; i < 13; ++i) CHECK(frame_at(s.clip, i) == ep.frames[static_cast<std::size_t>(off + i)]);
  const Action a = normalize_action(ep.actions[1]);
  for (int k = 0; k < 7; ++k) CHECK(s.actions(0, k) == a[static_cast<std::size_t>(k)]);
  CHECK(s.tokens == tokenize(ep.instruction, Vocab::standard(), 16));
}

TEST_CASE("joint loss examples") {
  const MatrixF ev = MatrixF::Zero(4, 3), ea = MatrixF::Zero(2, 7);
  CHECK(joint_loss(ev, ev, ea, ea, LossMode::dual, 1.0).total == 0.0);
  const MatrixF pv = MatrixF::Ones(4, 3);
  CHECK(joint_loss(ev, pv, ea, ea, LossMode::dual, 1.0).total == doctest::Approx(1.0));
  CHECK(joint_loss(ev, pv, ea, ea, LossMode::no_video_loss, 1.0).total == 0.0);
  const MatrixF pa = MatrixF::Constant(2, 7, 2.f);
  CHECK(joint_loss(ev, pv, ea, pa, LossMode::dual, 0.5).total == doctest::Approx(1.0 + 0.5 * 4.0));
  CHECK(joint_loss(ev, pv, ea, pa, LossMode::action_only, 0.5).total == doctest::Approx(4.0));

  // Batch order does not matter.
  MatrixF a(3, 2), b(3, 2);
  a << 1, 2, 3, 4, 5, 6;
  b << 5, 6, 1, 2, 3, 4;
  CHECK(joint_loss(a, MatrixF::Zero(3, 2), a, MatrixF::Zero(3, 2), LossMode::dual, 1.0).total ==
        doctest::Approx(joint_loss(b, MatrixF::Zero(3, 2), b, MatrixF::Zero(3, 2), LossMode::dual, 1.0).total));
}

TEST_CASE("step-zero loss is about one per modality") {
  RunConfig c;
  c.model.d_model = 16;
  c.model.n_heads = 2;
  c.model.n_blocks = 1;
  c.train.batch = 8;
  c.train.steps = 1;
  const TrainDataset data =
      build_dataset(expert_episodes(3), c.model.frames(), c.model.actions, 2, Vocab::standard(), 16);
  const TrainResult r = train(c, data);
  REQUIRE(r.curve.size() == 1);
  CHECK(r.curve[0].video == doctest::Approx(1.0).epsilon(0.05));
  CHECK(r.curve[0].action == doctest::Approx(1.0).epsilon(0.5));
  CHECK(r.curve[0].total == doctest::Approx(r.curve[0].video + r.curve[0].action).epsilon(1e-5));
}

TEST_CASE("training is bitwise reproducible and resumable") {
  const RunConfig c = tiny_run(LossMode::dual);
  const TrainDataset data = tiny_data(c);
  const TrainResult a = train(c, data), b = train(c, data);
  CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint));
  CHECK(loss_csv(a.curve) == loss_csv(b.curve));
  CHECK(loss_csv(a.curve).rfind("step,loss_total,loss_video,loss_action\n", 0) == 0);

  const fs::path dir = fs::temp_directory_path() / "vvla_resume_test";
  fs::remove_all(dir);
  TrainOptions opt;
  opt.out_dir = dir.string();
  // Kill the run once step 2 is logged; the step-2 checkpoint is on disk.
  opt.log = [](const std::string& line) {
    if (line.rfind("step 2 ", 0) == 0) throw std::runtime_error("killed");
  };
  CHECK_THROWS_WITH(train(c, data, opt), "killed");
  opt.log = nullptr;
  const TrainResult resumed = train(c, data, opt);
  CHECK(resumed.resumed_from == 2);
  CHECK(encode_checkpoint(resumed.checkpoint) == encode_checkpoint(a.checkpoint));
  CHECK(encode_checkpoint(load_checkpoint((dir / "checkpoint.vvck").string())) == encode_checkpoint(a.checkpoint));

  RunConfig other = c;
  other.train.lr = 5e-4;
  CHECK_THROWS_AS(train(other, data, opt), UsageError);
  fs::remove_all(dir);
}

TEST_CASE("output heads only receive gradient from their own loss") {
  for (LossMode mode : {LossMode::dual, LossMode::no_video_loss, LossMode::action_only}) {
    const RunConfig c = tiny_run(mode);
    const TrainResult r = train(c, tiny_data(c));
    CHECK(r.head_grad_norm.at("head.action.w") > 0.0);
    if (mode == LossMode::dual) CHECK(r.head_grad_norm.at("head.video.w") > 0.0);
    if (mode == LossMode::no_video_loss) {
      CHECK(r.head_grad_norm.at("head.video.w") == 0.0);
      CHECK(r.head_grad_norm.at("head.video.b") == 0.0);
    }
    if (mode == LossMode::action_only) CHECK(r.head_grad_norm.count("head.video.w") == 0);
  }
}

TEST_CASE("action-only models carry no future tokens") {
  RunConfig c = tiny_run(LossMode::action_only);
  const ModelConfig m = model_config_for(c);
  CHECK_FALSE(m.video_tokens);
  CHECK(m.seq_len() == m.text_len + m.grid_tokens() + m.actions);
  CHECK(to_text(c).find("action_only") != std::string::npos);
}

TEST_CASE("model gradient check at reduced size in 64-bit mode") {
  ModelConfig cfg;
  cfg.vocab_size = Vocab::standard().size();
  const GradReport r = verify_model_gradients(cfg, LossMode::dual, 32, 3);
  CHECK(r.pass);
}
