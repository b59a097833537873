#include "vvla/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "vvla/binary_io.hpp"
#include "vvla/seeding.hpp"

namespace fs = std::filesystem;

namespace vvla {

namespace {

constexpr const char* kOptimPrefix = "optim.";
constexpr const char* kCheckpointFile = "checkpoint.vvck";
constexpr const char* kLossFile = "loss.csv";

double mse(const MatrixF& a, const MatrixF& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw UsageError("joint_loss: shape mismatch");
  if (a.size() == 0) return 0.0;
  return (a - b).cast<double>().squaredNorm() / static_cast<double>(a.size());
}

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

LossParts joint_loss(const MatrixF& eps_video, const MatrixF& pred_video, const MatrixF& eps_action,
                     const MatrixF& pred_action, LossMode mode, double lambda) {
  LossParts out;
  out.action = mse(eps_action, pred_action);
  switch (mode) {
    case LossMode::dual:
      out.video = mse(eps_video, pred_video);
      out.total = out.video + lambda * out.action;
      break;
    case LossMode::no_video_loss:
      out.video = mse(eps_video, pred_video);
      out.total = lambda * out.action;
      break;
    case LossMode::action_only:
      out.total = out.action;
      break;
  }
  return out;
}

template <typename Scalar>
JointLossVars<Scalar> joint_loss(const ModelOutput<Scalar>& out, const RowMatrix<Scalar>& eps_video,
                                 const std::vector<Scalar>& video_weight, const RowMatrix<Scalar>& eps_action,
                                 const std::vector<Scalar>& action_weight, LossMode mode, double lambda) {
  JointLossVars<Scalar> l;
  l.action = masked_mse(out.action, eps_action, action_weight);
  if (out.video.tape) l.video = masked_mse(out.video, eps_video, video_weight);
  switch (mode) {
    case LossMode::dual:
      if (!l.video.tape) throw UsageError("dual loss needs video tokens");
      l.total = l.video + l.action * static_cast<Scalar>(lambda);
      break;
    case LossMode::no_video_loss:
      l.total = l.action * static_cast<Scalar>(lambda);
      break;
    case LossMode::action_only:
      l.total = l.action;
      break;
  }
  return l;
}

MatrixF observation_tokens(const Frame& frame, const ModelConfig& cfg) {
  Clip clip({1, kFrameSize, kFrameSize, kFrameChannels}, frame.pixels.data());
  const LatentClip lat = encode(clip, cfg.patch);
  return to_model_range(latent_tokens(lat, 0));
}

template <typename Scalar>
NoisedBatch<Scalar> make_noised_batch(const std::vector<TrainSample>& samples, const ModelConfig& cfg,
                                      const DiffusionSchedule& sched, TimestepMode mode, std::mt19937_64& rng) {
  const int B = static_cast<int>(samples.size());
  const Index hw = cfg.grid_tokens(), fut = cfg.future_tokens(), c = cfg.latent_channels(), K = cfg.actions;
  NoisedBatch<Scalar> nb;
  auto& in = nb.input;
  in.batch = B;
  in.obs.resize(B * hw, c);
  in.future.resize(B * fut, c);
  in.actions.resize(B * K, cfg.action_dim);
  nb.eps_video.resize(B * fut, c);
  nb.eps_action.resize(B * K, cfg.action_dim);
  for (int b = 0; b < B; ++b) {
    const TrainSample& s = samples[static_cast<std::size_t>(b)];
    if (s.actions.rows() != K) throw UsageError("sample action count does not match the model");
    in.text.insert(in.text.end(), s.tokens.begin(), s.tokens.end());
    const LatentClip lat = encode(s.clip, cfg.patch);
    if (lat.shape()[0] != cfg.n_latents) throw UsageError("sample latent count does not match the model");
    in.obs.middleRows(b * hw, hw) = to_model_range(latent_tokens(lat, 0)).template cast<Scalar>();

    const TimestepPair t = sample_timesteps(mode, sched.steps(), rng);
    in.t_video.push_back(t.video);
    in.t_action.push_back(t.action);

    if (cfg.video_tokens) {
      RowMatrix<Scalar> x0(fut, c), eps(fut, c);
      for (int j = 1; j < cfg.n_latents; ++j) {
        x0.middleRows((j - 1) * hw, hw) = to_model_range(latent_tokens(lat, j)).template cast<Scalar>();
        bool valid = true;
        for (int f = 0; f < kTemporalRate; ++f)
          valid = valid && s.frame_valid[static_cast<std::size_t>(kTemporalRate * (j - 1) + 1 + f)];
        nb.video_weight.insert(nb.video_weight.end(), static_cast<std::size_t>(hw), valid ? Scalar(1) : Scalar(0));
      }
      fill_normal(eps, rng);
      in.future.middleRows(b * fut, fut) = add_noise(x0, eps, t.video, sched);
      nb.eps_video.middleRows(b * fut, fut) = eps;
    }
    RowMatrix<Scalar> a0 = s.actions.template cast<Scalar>(), eps(K, cfg.action_dim);
    fill_normal(eps, rng);
    in.actions.middleRows(b * K, K) = add_noise(a0, eps, t.action, sched);
    nb.eps_action.middleRows(b * K, K) = eps;
    for (Index k = 0; k < K; ++k)
      nb.action_weight.push_back(s.action_valid[static_cast<std::size_t>(k)] ? Scalar(1) : Scalar(0));
  }
  return nb;
}

std::string loss_csv(const std::vector<LossRow>& rows) {
  std::string out = "step,loss_total,loss_video,loss_action\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", r.step, static_cast<double>(r.total),
                  static_cast<double>(r.video), static_cast<double>(r.action));
    out += buf;
  }
  return out;
}

ModelConfig model_config_for(const RunConfig& cfg) {
  ModelConfig m = cfg.model;
  m.video_tokens = cfg.train.loss_mode != LossMode::action_only;
  if (m.vocab_size == 0) m.vocab_size = Vocab::standard().size();
  m.validate();
  return m;
}

ParamStore<float> model_params(const Checkpoint& ckpt) {
  ParamStore<float> out;
  for (const auto& [name, t] : ckpt.tensors)
    if (!starts_with(name, kOptimPrefix)) out.add(name, t);
  return out;
}

namespace {

Checkpoint pack(const ParamStore<float>& params, const AdamState& opt, const std::vector<LossRow>& curve,
                const std::string& config_text) {
  Checkpoint ck;
  ck.config_text = config_text;
  for (const auto& [name, t] : params) ck.tensors.add(name, t);
  for (const auto& [name, t] : opt.m) ck.tensors.add(std::string(kOptimPrefix) + "m." + name, t);
  for (const auto& [name, t] : opt.v) ck.tensors.add(std::string(kOptimPrefix) + "v." + name, t);
  Tensor<float> step({1});
  step[0] = static_cast<float>(opt.step);
  ck.tensors.add(std::string(kOptimPrefix) + "step", step);
  Tensor<float> rows({static_cast<Index>(curve.size()), 4});
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const auto r = static_cast<Index>(i);
    rows[4 * r] = static_cast<float>(curve[i].step);
    rows[4 * r + 1] = curve[i].total;
    rows[4 * r + 2] = curve[i].video;
    rows[4 * r + 3] = curve[i].action;
  }
  ck.tensors.add(std::string(kOptimPrefix) + "curve", rows);
  return ck;
}

void unpack(const Checkpoint& ck, ParamStore<float>& params, AdamState& opt, std::vector<LossRow>& curve) {
  params = model_params(ck);
  const std::string m = std::string(kOptimPrefix) + "m.", v = std::string(kOptimPrefix) + "v.";
  for (const auto& [name, t] : ck.tensors) {
    if (starts_with(name, m.c_str())) opt.m.add(name.substr(m.size()), t);
    if (starts_with(name, v.c_str())) opt.v.add(name.substr(v.size()), t);
  }
  opt.step = static_cast<std::int64_t>(ck.tensors.at(std::string(kOptimPrefix) + "step")[0]);
  const auto& rows = ck.tensors.at(std::string(kOptimPrefix) + "curve");
  curve.clear();
  for (Index r = 0; r < rows.shape()[0]; ++r)
    curve.push_back({static_cast<int>(rows[4 * r]), rows[4 * r + 1], rows[4 * r + 2], rows[4 * r + 3]});
}

}  // namespace

TrainResult train(const RunConfig& cfg, const TrainDataset& data, const TrainOptions& opt) {
  const ModelConfig mcfg = model_config_for(cfg);
  const TrainConfig& tc = cfg.train;
  if (tc.lambda <= 0) throw UsageError("lambda must be positive");
  if (tc.batch < 1 || tc.steps < 0) throw UsageError("batch must be positive and steps non-negative");
  if (data.size() == 0) throw DataError("dataset is empty");
  if (data.frames_per_window() != mcfg.frames() || data.actions_per_window() != mcfg.actions)
    throw UsageError("dataset windows do not match the model horizon");
  const DiffusionSchedule sched = DiffusionSchedule::from_config(cfg.diffusion);
  const AdamOptions adam{tc.lr, 0.9, 0.999, 1e-8, tc.weight_decay};
  RunConfig stored = cfg;
  stored.model = mcfg;
  const std::string config_text = to_text(stored);
  auto log = [&](const std::string& s) {
    if (opt.log) opt.log(s);
  };

  TrainResult result;
  ParamStore<float> params = init_params(mcfg, derive_seed(tc.seed, 0x9a));
  AdamState state;
  const fs::path ckpt_path = opt.out_dir.empty() ? fs::path() : fs::path(opt.out_dir) / kCheckpointFile;
  if (!opt.out_dir.empty()) fs::create_directories(opt.out_dir);
  if (!opt.out_dir.empty() && opt.resume && fs::exists(ckpt_path)) {
    const Checkpoint prev = load_checkpoint(ckpt_path.string());
    if (prev.config_text != config_text)
      throw UsageError("existing checkpoint in " + opt.out_dir + " was trained with a different config");
    unpack(prev, params, state, result.curve);
    result.resumed_from = static_cast<int>(state.step);
    log("resuming from step " + std::to_string(state.step));
  }

  auto save = [&](const Checkpoint& ck) {
    if (opt.out_dir.empty()) return;
    save_checkpoint(ckpt_path.string(), ck);
    const std::string csv = loss_csv(result.curve);
    write_file_bytes((fs::path(opt.out_dir) / kLossFile).string(), {csv.begin(), csv.end()});
  };

  const auto t0 = std::chrono::steady_clock::now();
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  for (int step = static_cast<int>(state.step); step < tc.steps; ++step) {
    std::mt19937_64 rng(derive_seed(tc.seed, {0xba7c, static_cast<std::uint64_t>(step)}));
    std::vector<TrainSample> samples;
    samples.reserve(static_cast<std::size_t>(tc.batch));
    for (int b = 0; b < tc.batch; ++b) samples.push_back(data.sample(pick(rng)));
    const NoisedBatch<float> nb = make_noised_batch<float>(samples, mcfg, sched, cfg.diffusion.timesteps, rng);

    Tape<float> tape;
    const auto bound = bind_params(tape, params, true);
    ForwardOptions fo;
    fo.training = true;
    fo.dropout_seed = derive_seed(tc.seed, {0xd50, static_cast<std::uint64_t>(step)});
    const auto out = forward(tape, bound, mcfg, nb.input, fo);
    const auto loss = joint_loss(out, nb.eps_video, nb.video_weight, nb.eps_action, nb.action_weight, tc.loss_mode,
                                 tc.lambda);
    const float total = loss.total.value()(0, 0);
    const float lv = loss.video.tape ? loss.video.value()(0, 0) : 0.f;
    const float la = loss.action.value()(0, 0);
    if (!std::isfinite(total)) {
      throw NumericalError("non-finite loss at step " + std::to_string(step) +
                           (opt.out_dir.empty() ? std::string() : "; last checkpoint kept in " + opt.out_dir));
    }
    tape.backward(loss.total);
    const ParamStore<float> grads = tape.parameter_grads();
    for (const auto& [name, g] : grads)
      if (starts_with(name, "head.")) result.head_grad_norm[name] += g.flat().template cast<double>().norm();
    adam_step(params, grads, state, adam);

    if (step % tc.log_every == 0 || step == tc.steps - 1) {
      result.curve.push_back({step, total, lv, la});
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      char buf[160];
      std::snprintf(buf, sizeof buf, "step %d loss %.5f video %.5f action %.5f (%.1fs)", step, total, lv, la, secs);
      log(buf);
    }
    if (tc.checkpoint_every > 0 && (step + 1) % tc.checkpoint_every == 0 && step + 1 < tc.steps)
      save(pack(params, state, result.curve, config_text));
  }
  result.checkpoint = pack(params, state, result.curve, config_text);
  save(result.checkpoint);
  return result;
}

GradReport verify_model_gradients(const ModelConfig& base, LossMode mode, int n_probe, std::uint64_t seed) {
  ModelConfig cfg = base;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_blocks = 2;
  cfg.dropout = 0.0;
  cfg.video_tokens = mode != LossMode::action_only;
  if (cfg.vocab_size == 0) cfg.vocab_size = Vocab::standard().size();
  cfg.validate();

  // Random non-zero parameters so every path carries gradient.
  ParamStore<double> params = init_params(cfg, seed).cast<double>();
  std::mt19937_64 rng(derive_seed(seed, 0x6c));
  std::normal_distribution<double> normal(0.0, 0.2);
  for (auto& [name, t] : params)
    for (Index i = 0; i < t.size(); ++i) t[i] = normal(rng);

  const int B = 2;
  const DiffusionSchedule sched(1000, 1e-4, 0.02);
  NoisedBatch<double> nb;
  auto& in = nb.input;
  in.batch = B;
  std::uniform_int_distribution<int> tok(0, cfg.vocab_size - 1);
  for (int i = 0; i < B * cfg.text_len; ++i) in.text.push_back(tok(rng));
  in.obs.resize(B * cfg.grid_tokens(), cfg.latent_channels());
  fill_normal(in.obs, rng);
  in.future.resize(B * cfg.future_tokens(), cfg.latent_channels());
  fill_normal(in.future, rng);
  in.actions.resize(B * cfg.actions, cfg.action_dim);
  fill_normal(in.actions, rng);
  in.t_video = {250, 700};
  in.t_action = {600, 40};
  nb.eps_video.resize(in.future.rows(), in.future.cols());
  fill_normal(nb.eps_video, rng);
  nb.eps_action.resize(in.actions.rows(), in.actions.cols());
  fill_normal(nb.eps_action, rng);
  nb.video_weight.assign(static_cast<std::size_t>(in.future.rows()), 1.0);
  nb.action_weight.assign(static_cast<std::size_t>(in.actions.rows()), 1.0);
  // Exercise the padding mask as well.
  if (!nb.video_weight.empty()) nb.video_weight.back() = 0.0;
  nb.action_weight.back() = 0.0;

  const LossFn fn = [&](const ParamStore<double>& p, ParamStore<double>* grads) {
    Tape<double> tape;
    const auto bound = bind_params(tape, p, grads != nullptr);
    const auto out = forward(tape, bound, cfg, in);
    const auto loss = joint_loss(out, nb.eps_video, nb.video_weight, nb.eps_action, nb.action_weight, mode, 0.7);
    if (grads) {
      tape.backward(loss.total);
      *grads = tape.parameter_grads();
    }
    return loss.total.value()(0, 0);
  };
  return check_gradients(fn, params, n_probe, 1e-6, 1e-3, seed);
}

#define VVLA_INSTANTIATE_TRAIN(S)                                                                               \
  template JointLossVars<S> joint_loss(const ModelOutput<S>&, const RowMatrix<S>&, const std::vector<S>&,      \
                                       const RowMatrix<S>&, const std::vector<S>&, LossMode, double);          \
  template NoisedBatch<S> make_noised_batch(const std::vector<TrainSample>&, const ModelConfig&,               \
                                            const DiffusionSchedule&, TimestepMode, std::mt19937_64&);

VVLA_INSTANTIATE_TRAIN(float)
VVLA_INSTANTIATE_TRAIN(double)

}  // namespace vvla
