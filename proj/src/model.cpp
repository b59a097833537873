#include "vvla/model.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "vvla/seeding.hpp"

namespace vvla {

SequenceLayout::SequenceLayout(const ModelConfig& cfg) {
  text_begin = 0;
  obs_begin = cfg.text_len;
  future_begin = obs_begin + cfg.grid_tokens();
  action_begin = future_begin + cfg.future_tokens();
  length = action_begin + cfg.actions;
}

Modality SequenceLayout::modality(int pos) const {
  if (pos < 0 || pos >= length) throw UsageError("sequence position out of range");
  if (pos < obs_begin) return Modality::text;
  if (pos < future_begin) return Modality::obs_latent;
  if (pos < action_begin) return Modality::future_latent;
  return Modality::action;
}

template <typename Scalar>
void ModelBatch<Scalar>::validate(const ModelConfig& cfg) const {
  const auto b = static_cast<std::size_t>(batch);
  const Index rows = batch;
  if (batch < 1) throw UsageError("model batch is empty");
  if (text.size() != b * static_cast<std::size_t>(cfg.text_len)) throw UsageError("text tokens: shape mismatch");
  for (int id : text) {
    if (id < 0 || id >= cfg.vocab_size) throw UsageError("text token id out of vocabulary");
  }
  if (obs.rows() != rows * cfg.grid_tokens() || obs.cols() != cfg.latent_channels())
    throw UsageError("observation latent: shape mismatch");
  if (cfg.video_tokens && (future.rows() != rows * cfg.future_tokens() || future.cols() != cfg.latent_channels()))
    throw UsageError("future latents: shape mismatch");
  if (actions.rows() != rows * cfg.actions || actions.cols() != cfg.action_dim)
    throw UsageError("actions: shape mismatch");
  if (t_video.size() != b || t_action.size() != b) throw UsageError("timesteps: one per sample required");
}

namespace {

std::string block_name(int i, const char* leaf) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "blocks.%02d.%s", i, leaf);
  return buf;
}

struct ParamSpec {
  std::string name;
  std::vector<Index> shape;
  enum Init { normal, zero } init;
};

std::vector<ParamSpec> param_inventory(const ModelConfig& cfg) {
  const Index d = cfg.d_model, c = cfg.latent_channels(), a = cfg.action_dim;
  std::vector<ParamSpec> s = {
      {"text.embed", {cfg.vocab_size, d}, ParamSpec::normal},
      {"text.pos", {cfg.text_len, d}, ParamSpec::normal},
      {"latent.proj.w", {c, d}, ParamSpec::normal},
      {"latent.proj.b", {1, d}, ParamSpec::zero},
      {"latent.pos", {cfg.grid_tokens(), d}, ParamSpec::normal},
      {"latent.time", {cfg.n_latents, d}, ParamSpec::normal},
      {"action.proj.w", {a, d}, ParamSpec::normal},
      {"action.proj.b", {1, d}, ParamSpec::zero},
      {"action.pos", {cfg.actions, d}, ParamSpec::normal},
      {"temb.fc1.w", {d, d}, ParamSpec::normal},
      {"temb.fc1.b", {1, d}, ParamSpec::zero},
      {"temb.fc2.w", {d, d}, ParamSpec::normal},
      {"temb.fc2.b", {1, d}, ParamSpec::zero},
  };
  const Index hidden = d * cfg.mlp_ratio;
  for (int i = 0; i < cfg.n_blocks; ++i) {
    s.push_back({block_name(i, "ada.w"), {d, 6 * d}, ParamSpec::zero});
    s.push_back({block_name(i, "ada.b"), {1, 6 * d}, ParamSpec::zero});
    s.push_back({block_name(i, "attn.qkv.w"), {d, 3 * d}, ParamSpec::normal});
    s.push_back({block_name(i, "attn.qkv.b"), {1, 3 * d}, ParamSpec::zero});
    s.push_back({block_name(i, "attn.out.w"), {d, d}, ParamSpec::normal});
    s.push_back({block_name(i, "attn.out.b"), {1, d}, ParamSpec::zero});
    s.push_back({block_name(i, "mlp.fc1.w"), {d, hidden}, ParamSpec::normal});
    s.push_back({block_name(i, "mlp.fc1.b"), {1, hidden}, ParamSpec::zero});
    s.push_back({block_name(i, "mlp.fc2.w"), {hidden, d}, ParamSpec::normal});
    s.push_back({block_name(i, "mlp.fc2.b"), {1, d}, ParamSpec::zero});
  }
  s.push_back({"final.ada.w", {d, 2 * d}, ParamSpec::zero});
  s.push_back({"final.ada.b", {1, 2 * d}, ParamSpec::zero});
  if (cfg.video_tokens) {
    s.push_back({"head.video.w", {d, c}, ParamSpec::zero});
    s.push_back({"head.video.b", {1, c}, ParamSpec::zero});
  }
  s.push_back({"head.action.w", {d, a}, ParamSpec::zero});
  s.push_back({"head.action.b", {1, a}, ParamSpec::zero});
  return s;
}

}  // namespace

ParamStore<float> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(seed, 0x1417));
  std::normal_distribution<double> normal(0.0, 0.02);
  ParamStore<float> store;
  for (const auto& spec : param_inventory(cfg)) {
    Tensor<float> t(spec.shape);
    if (spec.init == ParamSpec::normal) {
      for (Index i = 0; i < t.size(); ++i) {
        double x;
        do {
          x = normal(rng);
        } while (std::abs(x) > 0.04);
        t[i] = static_cast<float>(x);
      }
    }
    store.add(spec.name, std::move(t));
  }
  return store;
}

template <typename Scalar>
BoundParams<Scalar> bind_params(Tape<Scalar>& tape, const ParamStore<Scalar>& params, bool trainable) {
  BoundParams<Scalar> out;
  for (const auto& [name, t] : params) {
    RowMatrix<Scalar> m = t.matrix();
    out.emplace(name, trainable ? tape.parameter(name, std::move(m)) : tape.constant(std::move(m)));
  }
  return out;
}

template <typename Scalar>
RowMatrix<Scalar> timestep_features(const std::vector<int>& t, int dim) {
  const int half = dim / 2;
  RowMatrix<Scalar> out = RowMatrix<Scalar>::Zero(static_cast<Index>(t.size()), dim);
  for (std::size_t r = 0; r < t.size(); ++r) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      const double arg = t[r] * freq;
      out(static_cast<Index>(r), i) = static_cast<Scalar>(std::cos(arg));
      out(static_cast<Index>(r), half + i) = static_cast<Scalar>(std::sin(arg));
    }
  }
  return out;
}

namespace {

template <typename Scalar>
const Var<Scalar>& param(const BoundParams<Scalar>& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw DataError("model parameter missing: " + name);
  return it->second;
}

template <typename Scalar>
void check_finite(const Var<Scalar>& v, const char* what, int block) {
  if (!v.value().allFinite()) {
    throw NumericalError(std::string("non-finite activation in ") + what +
                         (block >= 0 ? " (block " + std::to_string(block) + ")" : std::string()));
  }
}

}  // namespace

template <typename Scalar>
Var<Scalar> assemble_sequence(Tape<Scalar>& tape, const BoundParams<Scalar>& p, const ModelConfig& cfg,
                              const ModelBatch<Scalar>& in, const ForwardOptions& opt) {
  in.validate(cfg);
  const int B = in.batch, Lt = cfg.text_len, hw = cfg.grid_tokens(), K = cfg.actions;
  const int n_lat = cfg.video_tokens ? cfg.n_latents : 1;
  const SequenceLayout layout(cfg);

  // Text segment.
  Var<Scalar> text = gather_rows(param(p, "text.embed"), in.text);
  // Latent segment: observation latent followed by the future latents, per sample.
  RowMatrix<Scalar> lat_in(static_cast<Index>(B) * n_lat * hw, cfg.latent_channels());
  for (int b = 0; b < B; ++b) {
    lat_in.middleRows(static_cast<Index>(b) * n_lat * hw, hw) = in.obs.middleRows(static_cast<Index>(b) * hw, hw);
    if (n_lat > 1) {
      const Index fut = static_cast<Index>(n_lat - 1) * hw;
      lat_in.middleRows(static_cast<Index>(b) * n_lat * hw + hw, fut) = in.future.middleRows(b * fut, fut);
    }
  }
  Var<Scalar> latent = linear(tape.constant(std::move(lat_in)), param(p, "latent.proj.w"), param(p, "latent.proj.b"));
  Var<Scalar> action = linear(tape.constant(in.actions), param(p, "action.proj.w"), param(p, "action.proj.b"));

  if (!opt.zero_positions) {
    std::vector<int> text_pos(static_cast<std::size_t>(B * Lt)), raster(static_cast<std::size_t>(B * n_lat * hw)),
        time(raster.size()), act_pos(static_cast<std::size_t>(B * K));
    for (std::size_t r = 0; r < text_pos.size(); ++r) text_pos[r] = static_cast<int>(r % static_cast<std::size_t>(Lt));
    for (std::size_t r = 0; r < raster.size(); ++r) {
      raster[r] = static_cast<int>(r % static_cast<std::size_t>(hw));
      time[r] = static_cast<int>((r / static_cast<std::size_t>(hw)) % static_cast<std::size_t>(n_lat));
    }
    for (std::size_t r = 0; r < act_pos.size(); ++r) act_pos[r] = static_cast<int>(r % static_cast<std::size_t>(K));
    text = add_indexed_rows(text, param(p, "text.pos"), text_pos);
    latent = add_indexed_rows(add_indexed_rows(latent, param(p, "latent.pos"), raster), param(p, "latent.time"), time);
    action = add_indexed_rows(action, param(p, "action.pos"), act_pos);
  }

  std::vector<std::pair<int, int>> map;
  map.reserve(static_cast<std::size_t>(B * layout.length));
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < Lt; ++i) map.emplace_back(0, b * Lt + i);
    for (int i = 0; i < n_lat * hw; ++i) map.emplace_back(1, b * n_lat * hw + i);
    for (int i = 0; i < K; ++i) map.emplace_back(2, b * K + i);
  }
  return assemble_rows<Scalar>({text, latent, action}, map);
}

template <typename Scalar>
ModelOutput<Scalar> forward(Tape<Scalar>& tape, const BoundParams<Scalar>& p, const ModelConfig& cfg,
                            const ModelBatch<Scalar>& in, const ForwardOptions& opt) {
  const SequenceLayout layout(cfg);
  const int B = in.batch, L = layout.length, d = cfg.d_model;
  ModelOutput<Scalar> out;
  Var<Scalar> x = assemble_sequence(tape, p, cfg, in, opt);
  out.tokens = x;

  // Two conditioning rows per sample: 2b <- t_video, 2b+1 <- t_action.
  std::vector<int> ts;
  for (int b = 0; b < B; ++b) {
    ts.push_back(in.t_video[static_cast<std::size_t>(b)]);
    ts.push_back(in.t_action[static_cast<std::size_t>(b)]);
  }
  Var<Scalar> cond = tape.constant(timestep_features<Scalar>(ts, d));
  cond = linear(silu(linear(cond, param(p, "temb.fc1.w"), param(p, "temb.fc1.b"))), param(p, "temb.fc2.w"),
                param(p, "temb.fc2.b"));
  const Var<Scalar> cond_act = silu(cond);

  RowMap row_map(static_cast<std::size_t>(B * L));
  for (int b = 0; b < B; ++b) {
    for (int l = 0; l < L; ++l) {
      const bool is_action = l >= layout.action_begin && !opt.shared_condition;
      row_map[static_cast<std::size_t>(b * L + l)] = 2 * b + (is_action ? 1 : 0);
    }
  }
  AttentionMask mask;
  if (cfg.mask == MaskMode::causal) {
    mask.restricted_queries = layout.action_begin;
    mask.visible_keys = layout.action_begin;
  }
  const bool use_dropout = opt.training && cfg.dropout > 0.0;

  for (int i = 0; i < cfg.n_blocks; ++i) {
    const Var<Scalar> mod = linear(cond_act, param(p, block_name(i, "ada.w")), param(p, block_name(i, "ada.b")));
    // mod columns: [shift1 | scale1 | gate1 | shift2 | scale2 | gate2]
    Var<Scalar> h = modulate(layer_norm(x), mod, 0, d, row_map);
    h = linear(h, param(p, block_name(i, "attn.qkv.w")), param(p, block_name(i, "attn.qkv.b")));
    h = attention(h, cfg.n_heads, L, mask);
    h = linear(h, param(p, block_name(i, "attn.out.w")), param(p, block_name(i, "attn.out.b")));
    if (use_dropout) h = dropout(h, cfg.dropout, derive_seed(opt.dropout_seed, static_cast<std::uint64_t>(2 * i)));
    x = gated_residual(x, h, mod, 2 * d, row_map);

    h = modulate(layer_norm(x), mod, 3 * d, 4 * d, row_map);
    h = gelu(linear(h, param(p, block_name(i, "mlp.fc1.w")), param(p, block_name(i, "mlp.fc1.b"))));
    if (use_dropout) h = dropout(h, cfg.dropout, derive_seed(opt.dropout_seed, static_cast<std::uint64_t>(2 * i + 1)));
    h = linear(h, param(p, block_name(i, "mlp.fc2.w")), param(p, block_name(i, "mlp.fc2.b")));
    x = gated_residual(x, h, mod, 5 * d, row_map);
    if (opt.checked) check_finite(x, "transformer block", i);
  }

  const Var<Scalar> fmod = linear(cond_act, param(p, "final.ada.w"), param(p, "final.ada.b"));
  x = modulate(layer_norm(x), fmod, 0, d, row_map);

  std::vector<int> act_rows;
  for (int b = 0; b < B; ++b) {
    for (int k = 0; k < cfg.actions; ++k) act_rows.push_back(b * L + layout.action_begin + k);
  }
  out.action = linear(gather_rows(x, act_rows), param(p, "head.action.w"), param(p, "head.action.b"));
  if (cfg.video_tokens) {
    std::vector<int> vid_rows;
    for (int b = 0; b < B; ++b) {
      for (int k = layout.future_begin; k < layout.action_begin; ++k) vid_rows.push_back(b * L + k);
    }
    out.video = linear(gather_rows(x, vid_rows), param(p, "head.video.w"), param(p, "head.video.b"));
    if (opt.checked) check_finite(out.video, "video head", -1);
  }
  if (opt.checked) check_finite(out.action, "action head", -1);
  return out;
}

template <typename Scalar>
NoisePrediction<Scalar> predict_noise(const ParamStore<Scalar>& params, const ModelConfig& cfg,
                                      const ModelBatch<Scalar>& in, const ForwardOptions& opt) {
  Tape<Scalar> tape;
  const auto bound = bind_params(tape, params, false);
  auto out = forward(tape, bound, cfg, in, opt);
  NoisePrediction<Scalar> pred;
  pred.action = out.action.value();
  if (cfg.video_tokens) pred.video = out.video.value();
  return pred;
}

#define VVLA_INSTANTIATE_MODEL(S)                                                                             \
  template struct ModelBatch<S>;                                                                              \
  template BoundParams<S> bind_params(Tape<S>&, const ParamStore<S>&, bool);                                  \
  template Var<S> assemble_sequence(Tape<S>&, const BoundParams<S>&, const ModelConfig&, const ModelBatch<S>&, \
                                    const ForwardOptions&);                                                   \
  template ModelOutput<S> forward(Tape<S>&, const BoundParams<S>&, const ModelConfig&, const ModelBatch<S>&,   \
                                  const ForwardOptions&);                                                     \
  template NoisePrediction<S> predict_noise(const ParamStore<S>&, const ModelConfig&, const ModelBatch<S>&,    \
                                            const ForwardOptions&);                                           \
  template RowMatrix<S> timestep_features(const std::vector<int>&, int);

VVLA_INSTANTIATE_MODEL(float)
VVLA_INSTANTIATE_MODEL(double)

}  // namespace vvla
