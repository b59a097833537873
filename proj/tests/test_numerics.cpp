#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "vvla/autodiff.hpp"
#include "vvla/checkpoint.hpp"
#include "vvla/gradcheck.hpp"
#include "vvla/model.hpp"
#include "vvla/optim.hpp"
#include "vvla/text.hpp"
#include "vvla/train.hpp"

using namespace vvla;

namespace {

ParamStore<double> scalars(std::initializer_list<double> values) {
  ParamStore<double> p;
  int i = 0;
  for (double v : values) {
    Tensor<double> t({1});
    t[0] = v;
    p.set("p" + std::to_string(i++), t);
  }
  return p;
}

ParamStore<float> scalar_f(float v) {
  ParamStore<float> p;
  Tensor<float> t({1});
  t[0] = v;
  p.set("w", t);
  return p;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_blocks = 2;
  c.n_latents = 2;
  c.actions = 2;
  c.text_len = 4;
  c.vocab_size = Vocab::standard().size();
  return c;
}

ModelBatch<float> random_batch(const ModelConfig& cfg, int batch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelBatch<float> b;
  b.batch = batch;
  std::uniform_int_distribution<int> tok(0, cfg.vocab_size - 1);
  for (int i = 0; i < batch * cfg.text_len; ++i) b.text.push_back(tok(rng));
  b.obs.resize(batch * cfg.grid_tokens(), cfg.latent_channels());
  b.future.resize(batch * cfg.future_tokens(), cfg.latent_channels());
  b.actions.resize(batch * cfg.actions, cfg.action_dim);
  fill_normal(b.obs, rng);
  fill_normal(b.future, rng);
  fill_normal(b.actions, rng);
  for (int i = 0; i < batch; ++i) {
    b.t_video.push_back(100 + 300 * i);
    b.t_action.push_back(900 - 200 * i);
  }
  return b;
}

void perturb(ParamStore<float>& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.f, 0.1f);
  for (auto& [name, t] : p)
    for (Index i = 0; i < t.size(); ++i) t[i] += n(rng);
}

}  // namespace

TEST_CASE("gradient check: linear loss has exact gradients") {
  const LossFn f = [](const ParamStore<double>& p, ParamStore<double>* g) {
    double s = 0;
    for (const auto& [name, t] : p) s += t[0];
    if (g) {
      *g = p;
      for (auto& [name, t] : *g) t[0] = 1.0;
    }
    return s;
  };
  const GradReport r = check_gradients(f, scalars({0.3, -1.2, 4.0}), 3, 1e-4, 1e-3);
  CHECK(r.pass);
  CHECK(r.max_rel_err < 1e-9);
  CHECK(r.probed == 3);
}

TEST_CASE("gradient check: constant loss passes by exclusion") {
  const LossFn f = [](const ParamStore<double>& p, ParamStore<double>* g) {
    if (g) {
      *g = p;
      for (auto& [name, t] : *g) t[0] = 0.0;
    }
    return 7.0;
  };
  const GradReport r = check_gradients(f, scalars({1.0, 2.0}), 2, 1e-4, 1e-3);
  CHECK(r.pass);
  CHECK(r.excluded == r.probed);
}

TEST_CASE("gradient check: quadratic at 0.5") {
  const LossFn f = [](const ParamStore<double>& p, ParamStore<double>* g) {
    double s = 0;
    for (const auto& [name, t] : p) s += t[0] * t[0];
    if (g) {
      *g = p;
      for (auto& [name, t] : *g) t[0] *= 2.0;
    }
    return s;
  };
  // Central differences are exact for quadratics up to rounding.
  const GradReport r = check_gradients(f, scalars({0.5}), 1, 1e-4, 1e-3);
  CHECK(r.max_rel_err < 1e-8);
}

TEST_CASE("gradient check: a wrong gradient fails and names the parameter") {
  const LossFn f = [](const ParamStore<double>& p, ParamStore<double>* g) {
    double s = 0;
    for (const auto& [name, t] : p) s += t[0] * t[0];
    if (g) {
      *g = p;
      for (auto& [name, t] : *g) t[0] *= 3.0;
    }
    return s;
  };
  const GradReport r = check_gradients(f, scalars({0.5}), 1, 1e-4, 1e-3);
  CHECK_FALSE(r.pass);
  CHECK(r.worst_param == "p0");
}

TEST_CASE("gradient check: non-finite loss aborts") {
  const LossFn f = [](const ParamStore<double>& p, ParamStore<double>* g) {
    if (g) *g = p;
    return std::nan("");
  };
  CHECK_THROWS_AS(check_gradients(f, scalars({1.0}), 1, 1e-4, 1e-3), NumericalError);
}

TEST_CASE("adam: zero gradient without decay leaves parameters alone") {
  ParamStore<float> p = scalar_f(1.5f);
  AdamState s;
  adam_step(p, scalar_f(0.f), s, {0.1, 0.9, 0.999, 1e-8, 0.0});
  CHECK(p.at("w")[0] == 1.5f);
}

TEST_CASE("adam: first bias-corrected step moves by lr") {
  ParamStore<float> p = scalar_f(1.f);
  AdamState s;
  adam_step(p, scalar_f(1.f), s, {0.1, 0.9, 0.999, 1e-8, 0.0});
  // m_hat = 1, v_hat = 1, update = lr * 1 / (1 + eps).
  CHECK(p.at("w")[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(s.step == 1);
}

TEST_CASE("adam: decoupled weight decay") {
  ParamStore<float> p = scalar_f(1.f);
  AdamState s;
  adam_step(p, scalar_f(0.f), s, {0.1, 0.9, 0.999, 1e-8, 1.0});
  CHECK(p.at("w")[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam: missing gradient is an error") {
  ParamStore<float> p = scalar_f(1.f);
  ParamStore<float> g;
  AdamState s;
  CHECK_THROWS(adam_step(p, g, s, {}));
}

TEST_CASE("checkpoint round trip is bit exact") {
  Checkpoint c;
  c.tensors = init_params(tiny_config(), 3);
  perturb(c.tensors, 4);
  c.config_text = "[model]\nd_model = 16\n";
  const auto bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.tensors == c.tensors);
  CHECK(back.config_text == c.config_text);
  CHECK(encode_checkpoint(back) == bytes);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), DataError);
  bad = bytes;
  bad.resize(bytes.size() / 2);
  CHECK_THROWS_AS(decode_checkpoint(bad), DataError);
}

TEST_CASE("save, load, forward is bitwise identical") {
  const ModelConfig cfg = tiny_config();
  ParamStore<float> p = init_params(cfg, 5);
  perturb(p, 6);
  const auto batch = random_batch(cfg, 2, 7);
  const auto before = predict_noise(p, cfg, batch);
  const std::string path = "vvla_test_ckpt.vvck";
  save_checkpoint(path, {p, ""});
  const auto after = predict_noise(load_checkpoint(path).tensors, cfg, batch);
  std::remove(path.c_str());
  CHECK(before.video == after.video);
  CHECK(before.action == after.action);
}

// ---------------------------------------------------------------- backbone

TEST_CASE("sequence layout for the desk config") {
  ModelConfig cfg;
  cfg.vocab_size = Vocab::standard().size();
  CHECK(cfg.seq_len() == 16 + 4 * 64 + 6);
  CHECK(cfg.seq_len() == 278);
  const SequenceLayout lay(cfg);
  CHECK(lay.obs_begin == 16);
  CHECK(lay.future_begin == 80);
  CHECK(lay.action_begin == 272);
  CHECK(lay.modality(271) == Modality::future_latent);
  CHECK(lay.modality(272) == Modality::action);
}

TEST_CASE("parameter count matches the closed form") {
  ModelConfig cfg;
  cfg.vocab_size = Vocab::standard().size();
  const long d = 128, c = 192, a = 7, v = cfg.vocab_size, hidden = 4 * d;
  const long embed = v * d + 16 * d + (c * d + d) + 64 * d + 4 * d + (a * d + d) + 6 * d;
  const long temb = 2 * (d * d + d);
  const long block = (d * 6 * d + 6 * d) + (d * 3 * d + 3 * d) + (d * d + d) + (d * hidden + hidden) + (hidden * d + d);
  const long final = d * 2 * d + 2 * d;
  const long heads = (d * c + c) + (d * a + a);
  const long expected = embed + temb + 6 * block + final + heads;
  long total = 0;
  for (const auto& [name, t] : init_params(cfg, 0)) total += t.size();
  CHECK(total == expected);
}

TEST_CASE("init is seeded and zero heads predict zero noise") {
  const ModelConfig cfg = tiny_config();
  CHECK(init_params(cfg, 9) == init_params(cfg, 9));
  CHECK_FALSE(init_params(cfg, 9) == init_params(cfg, 10));
  const auto out = predict_noise(init_params(cfg, 9), cfg, random_batch(cfg, 2, 1));
  CHECK(out.video.size() == 2 * cfg.future_tokens() * cfg.latent_channels());
  CHECK(out.video.cwiseAbs().maxCoeff() == 0.f);
  CHECK(out.action.cwiseAbs().maxCoeff() == 0.f);
}

TEST_CASE("causal mask isolates video outputs from action tokens") {
  ModelConfig cfg = tiny_config();
  ParamStore<float> p = init_params(cfg, 11);
  perturb(p, 12);
  auto batch = random_batch(cfg, 2, 13);
  auto moved = batch;
  moved.actions.array() += 0.7f;
  cfg.mask = MaskMode::causal;
  const auto a = predict_noise(p, cfg, batch), b = predict_noise(p, cfg, moved);
  CHECK(a.video == b.video);
  CHECK_FALSE(a.action == b.action);
  cfg.mask = MaskMode::bidirectional;
  const auto c = predict_noise(p, cfg, batch), d = predict_noise(p, cfg, moved);
  CHECK_FALSE(c.video == d.video);
}

TEST_CASE("sync timesteps equal a shared timestep condition") {
  const ModelConfig cfg = tiny_config();
  ParamStore<float> p = init_params(cfg, 14);
  perturb(p, 15);
  auto batch = random_batch(cfg, 2, 16);
  batch.t_action = batch.t_video;
  ForwardOptions shared;
  shared.shared_condition = true;
  const auto a = predict_noise(p, cfg, batch), b = predict_noise(p, cfg, batch, shared);
  CHECK(a.video == b.video);
  CHECK(a.action == b.action);
}

TEST_CASE("zero action input embeds to the projection bias") {
  const ModelConfig cfg = tiny_config();
  ParamStore<float> p = init_params(cfg, 17);
  perturb(p, 18);
  auto batch = random_batch(cfg, 1, 19);
  batch.actions.row(0).setZero();
  Tape<float> tape;
  const auto bound = bind_params(tape, p, false);
  ForwardOptions opt;
  opt.zero_positions = true;
  const Var<float> seq = assemble_sequence(tape, bound, cfg, batch, opt);
  const SequenceLayout lay(cfg);
  const MatrixF bias = p.at("action.proj.b").matrix();
  CHECK(seq.value().row(lay.action_begin) == bias.row(0));

  // Swapping two actions swaps exactly their two token embeddings.
  auto swapped = batch;
  swapped.actions.row(0).swap(swapped.actions.row(1));
  const Var<float> seq2 = assemble_sequence(tape, bound, cfg, swapped, opt);
  CHECK(seq2.value().row(lay.action_begin) == seq.value().row(lay.action_begin + 1));
  CHECK(seq2.value().row(lay.action_begin + 1) == seq.value().row(lay.action_begin));
  CHECK(seq2.value().topRows(lay.action_begin) == seq.value().topRows(lay.action_begin));
}

TEST_CASE("forward is deterministic") {
  const ModelConfig cfg = tiny_config();
  ParamStore<float> p = init_params(cfg, 20);
  perturb(p, 21);
  const auto batch = random_batch(cfg, 2, 22);
  const auto a = predict_noise(p, cfg, batch), b = predict_noise(p, cfg, batch);
  CHECK(a.video == b.video);
  CHECK(a.action == b.action);
}

TEST_CASE("model gradients match finite differences") {
  ModelConfig cfg = tiny_config();
  for (LossMode mode : {LossMode::dual, LossMode::no_video_loss, LossMode::action_only}) {
    for (MaskMode mask : {MaskMode::bidirectional, MaskMode::causal}) {
      cfg.mask = mask;
      const GradReport r = verify_model_gradients(cfg, mode, 64, 23);
      INFO(to_string(mode), " ", to_string(mask), " worst ", r.worst_param, " ", r.max_rel_err);
      CHECK(r.pass);
      CHECK(r.probed == 64);
    }
  }
}
