#include "vvla/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace vvla {

namespace {
constexpr int kFramesPerAction = 2;
}

std::string to_string(MaskMode m) { return m == MaskMode::causal ? "causal" : "bidirectional"; }
std::string to_string(TimestepMode m) { return m == TimestepMode::async ? "async" : "sync"; }
std::string to_string(InferMode m) { return m == InferMode::two_stage ? "two_stage" : "joint"; }
std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::dual: return "dual";
    case LossMode::no_video_loss: return "no_video_loss";
    case LossMode::action_only: return "action_only";
  }
  return "dual";
}

namespace {

std::string normalize(std::string s) {
  for (char& c : s) {
    if (c == '-') c = '_';
  }
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw UsageError("config key " + key + ": expected integer, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const auto x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw UsageError("config key " + key + ": expected unsigned integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw UsageError("config key " + key + ": expected number, got '" + v + "'");
  }
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;
struct Key {
  Setter set;
  Getter get;
};

// Ordered so to_text() output is stable.
const std::vector<std::pair<std::string, std::vector<std::pair<std::string, Key>>>>& schema() {
  static const std::vector<std::pair<std::string, std::vector<std::pair<std::string, Key>>>> s = {
      {"model",
       {
           {"d_model", {[](RunConfig& c, const std::string& v) { c.model.d_model = to_int("d_model", v); },
                        [](const RunConfig& c) { return std::to_string(c.model.d_model); }}},
           {"n_heads", {[](RunConfig& c, const std::string& v) { c.model.n_heads = to_int("n_heads", v); },
                        [](const RunConfig& c) { return std::to_string(c.model.n_heads); }}},
           {"n_blocks", {[](RunConfig& c, const std::string& v) { c.model.n_blocks = to_int("n_blocks", v); },
                         [](const RunConfig& c) { return std::to_string(c.model.n_blocks); }}},
           {"mlp_ratio", {[](RunConfig& c, const std::string& v) { c.model.mlp_ratio = to_int("mlp_ratio", v); },
                          [](const RunConfig& c) { return std::to_string(c.model.mlp_ratio); }}},
           {"text_len", {[](RunConfig& c, const std::string& v) { c.model.text_len = to_int("text_len", v); },
                         [](const RunConfig& c) { return std::to_string(c.model.text_len); }}},
           {"patch", {[](RunConfig& c, const std::string& v) { c.model.patch = to_int("patch", v); },
                      [](const RunConfig& c) { return std::to_string(c.model.patch); }}},
           {"n_latents", {[](RunConfig& c, const std::string& v) { c.model.n_latents = to_int("n_latents", v); },
                          [](const RunConfig& c) { return std::to_string(c.model.n_latents); }}},
           {"actions", {[](RunConfig& c, const std::string& v) { c.model.actions = to_int("actions", v); },
                        [](const RunConfig& c) { return std::to_string(c.model.actions); }}},
           {"mask", {[](RunConfig& c, const std::string& v) { c.model.mask = parse_mask_mode(v); },
                     [](const RunConfig& c) { return to_string(c.model.mask); }}},
           {"dropout", {[](RunConfig& c, const std::string& v) { c.model.dropout = to_double("dropout", v); },
                        [](const RunConfig& c) { return fmt_double(c.model.dropout); }}},
       }},
      {"diffusion",
       {
           {"train_steps",
            {[](RunConfig& c, const std::string& v) { c.diffusion.train_steps = to_int("train_steps", v); },
             [](const RunConfig& c) { return std::to_string(c.diffusion.train_steps); }}},
           {"beta_min", {[](RunConfig& c, const std::string& v) { c.diffusion.beta_min = to_double("beta_min", v); },
                         [](const RunConfig& c) { return fmt_double(c.diffusion.beta_min); }}},
           {"beta_max", {[](RunConfig& c, const std::string& v) { c.diffusion.beta_max = to_double("beta_max", v); },
                         [](const RunConfig& c) { return fmt_double(c.diffusion.beta_max); }}},
           {"timesteps",
            {[](RunConfig& c, const std::string& v) { c.diffusion.timesteps = parse_timestep_mode(v); },
             [](const RunConfig& c) { return to_string(c.diffusion.timesteps); }}},
       }},
      {"train",
       {
           {"loss_mode", {[](RunConfig& c, const std::string& v) { c.train.loss_mode = parse_loss_mode(v); },
                          [](const RunConfig& c) { return to_string(c.train.loss_mode); }}},
           {"lambda", {[](RunConfig& c, const std::string& v) { c.train.lambda = to_double("lambda", v); },
                       [](const RunConfig& c) { return fmt_double(c.train.lambda); }}},
           {"batch", {[](RunConfig& c, const std::string& v) { c.train.batch = to_int("batch", v); },
                      [](const RunConfig& c) { return std::to_string(c.train.batch); }}},
           {"steps", {[](RunConfig& c, const std::string& v) { c.train.steps = to_int("steps", v); },
                      [](const RunConfig& c) { return std::to_string(c.train.steps); }}},
           {"lr", {[](RunConfig& c, const std::string& v) { c.train.lr = to_double("lr", v); },
                   [](const RunConfig& c) { return fmt_double(c.train.lr); }}},
           {"weight_decay",
            {[](RunConfig& c, const std::string& v) { c.train.weight_decay = to_double("weight_decay", v); },
             [](const RunConfig& c) { return fmt_double(c.train.weight_decay); }}},
           {"seed", {[](RunConfig& c, const std::string& v) { c.train.seed = to_u64("seed", v); },
                     [](const RunConfig& c) { return std::to_string(c.train.seed); }}},
           {"stride", {[](RunConfig& c, const std::string& v) { c.train.stride = to_int("stride", v); },
                       [](const RunConfig& c) { return std::to_string(c.train.stride); }}},
           {"checkpoint_every",
            {[](RunConfig& c, const std::string& v) { c.train.checkpoint_every = to_int("checkpoint_every", v); },
             [](const RunConfig& c) { return std::to_string(c.train.checkpoint_every); }}},
           {"log_every", {[](RunConfig& c, const std::string& v) { c.train.log_every = to_int("log_every", v); },
                          [](const RunConfig& c) { return std::to_string(c.train.log_every); }}},
           {"skills", {[](RunConfig& c, const std::string& v) { c.train.skills = v; },
                       [](const RunConfig& c) { return c.train.skills; }}},
       }},
      {"rollout",
       {
           {"execute", {[](RunConfig& c, const std::string& v) { c.rollout.execute = to_int("execute", v); },
                        [](const RunConfig& c) { return std::to_string(c.rollout.execute); }}},
           {"max_replans",
            {[](RunConfig& c, const std::string& v) { c.rollout.max_replans = to_int("max_replans", v); },
             [](const RunConfig& c) { return std::to_string(c.rollout.max_replans); }}},
           {"ddim_steps", {[](RunConfig& c, const std::string& v) { c.rollout.ddim_steps = to_int("ddim_steps", v); },
                           [](const RunConfig& c) { return std::to_string(c.rollout.ddim_steps); }}},
           {"infer_mode", {[](RunConfig& c, const std::string& v) { c.rollout.infer_mode = parse_infer_mode(v); },
                           [](const RunConfig& c) { return to_string(c.rollout.infer_mode); }}},
           {"trials", {[](RunConfig& c, const std::string& v) { c.rollout.trials = to_int("trials", v); },
                       [](const RunConfig& c) { return std::to_string(c.rollout.trials); }}},
           {"batch", {[](RunConfig& c, const std::string& v) { c.rollout.batch = to_int("batch", v); },
                      [](const RunConfig& c) { return std::to_string(c.rollout.batch); }}},
           {"seed", {[](RunConfig& c, const std::string& v) { c.rollout.seed = to_u64("seed", v); },
                     [](const RunConfig& c) { return std::to_string(c.rollout.seed); }}},
       }},
      {"data",
       {
           {"episodes_per_cell",
            {[](RunConfig& c, const std::string& v) { c.data.episodes_per_cell = to_int("episodes_per_cell", v); },
             [](const RunConfig& c) { return std::to_string(c.data.episodes_per_cell); }}},
           {"max_steps", {[](RunConfig& c, const std::string& v) { c.data.max_steps = to_int("max_steps", v); },
                          [](const RunConfig& c) { return std::to_string(c.data.max_steps); }}},
           {"seed", {[](RunConfig& c, const std::string& v) { c.data.seed = to_u64("seed", v); },
                     [](const RunConfig& c) { return std::to_string(c.data.seed); }}},
       }},
  };
  return s;
}

const Key* find_key(const std::string& section, const std::string& key) {
  for (const auto& [sec, keys] : schema()) {
    if (sec != section) continue;
    for (const auto& [k, handler] : keys) {
      if (k == key) return &handler;
    }
  }
  return nullptr;
}

}  // namespace

MaskMode parse_mask_mode(const std::string& s) {
  const auto v = normalize(s);
  if (v == "bidirectional") return MaskMode::bidirectional;
  if (v == "causal") return MaskMode::causal;
  throw UsageError("unknown mask mode: " + s);
}

TimestepMode parse_timestep_mode(const std::string& s) {
  const auto v = normalize(s);
  if (v == "sync") return TimestepMode::sync;
  if (v == "async") return TimestepMode::async;
  throw UsageError("unknown timestep mode: " + s);
}

InferMode parse_infer_mode(const std::string& s) {
  const auto v = normalize(s);
  if (v == "joint") return InferMode::joint;
  if (v == "two_stage") return InferMode::two_stage;
  throw UsageError("unknown inference mode: " + s);
}

LossMode parse_loss_mode(const std::string& s) {
  const auto v = normalize(s);
  if (v == "dual") return LossMode::dual;
  if (v == "no_video_loss") return LossMode::no_video_loss;
  if (v == "action_only") return LossMode::action_only;
  throw UsageError("unknown loss mode: " + s);
}

void ModelConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
    throw UsageError("model: d_model must be a positive multiple of n_heads");
  if ((d_model / n_heads) % 2 != 0 && d_model % 2 != 0) throw UsageError("model: d_model must be even");
  if (n_blocks < 1 || mlp_ratio < 1) throw UsageError("model: n_blocks and mlp_ratio must be >= 1");
  if (text_len < 1) throw UsageError("model: text_len must be >= 1");
  if (patch < 1 || frame_size % patch != 0) throw UsageError("model: frame size must be divisible by patch");
  if (n_latents < 1) throw UsageError("model: n_latents must be >= 1");
  if (actions < 1 || action_dim < 1) throw UsageError("model: actions must be >= 1");
  if (frames() - 1 != kFramesPerAction * actions)
    throw UsageError("model: the clip must span the action chunk (4 * (n_latents - 1) == 2 * actions)");
  if (dropout < 0.0 || dropout >= 1.0) throw UsageError("model: dropout must be in [0, 1)");
  if (vocab_size < 2) throw UsageError("model: vocab_size must be set");
}

void apply_override(RunConfig& c, const std::string& section, const std::string& key, const std::string& value) {
  const Key* k = find_key(section, normalize(key));
  if (k == nullptr) throw UsageError("unknown config key [" + section + "] " + key);
  k->set(c, trim(value));
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& [sec, _] : schema()) known = known || sec == section;
      if (!known) throw UsageError("config line " + std::to_string(lineno) + ": unknown section " + section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || section.empty())
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value inside a section");
    apply_override(c, section, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const RunConfig& c) {
  std::string out;
  for (const auto& [sec, keys] : schema()) {
    if (!out.empty()) out += "\n";
    out += "[" + sec + "]\n";
    for (const auto& [k, handler] : keys) out += k + " = " + handler.get(c) + "\n";
  }
  return out;
}

}  // namespace vvla
