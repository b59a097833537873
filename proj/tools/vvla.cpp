// vvla: data generation, training, closed-loop evaluation and analysis.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#ifdef __GLIBC__
#include <malloc.h>
#endif
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vvla/analyzer.hpp"
#include "vvla/binary_io.hpp"
#include "vvla/checkpoint.hpp"
#include "vvla/config.hpp"
#include "vvla/dataset.hpp"
#include "vvla/errors.hpp"
#include "vvla/rollout.hpp"
#include "vvla/train.hpp"

namespace fs = std::filesystem;
using namespace vvla;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

class Hasher {
 public:
  void add(const std::string& s) { h_ = fnv1a64({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}, h_); }
  void add_file(const fs::path& p) {
    add(p.filename().string());
    const auto bytes = read_file_bytes(p.string());
    h_ = fnv1a64(bytes, h_);
  }
  std::string hex() const { return hex64(h_); }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  int jobs = 1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) {
    cmd->add_option("--config", c.config_path, "INI run configuration (defaults when omitted)")->check(CLI::ExistingFile);
    cmd->add_option("--set", c.overrides, "override a config key, section.key=value")->take_all();
  }
  cmd->add_option("--out", c.out, "output directory")->required();
  cmd->add_option("--seed", c.seed, "seed (overrides VVLA_SEED and the config)");
  cmd->add_flag("--force", c.force, "overwrite outputs in a non-empty directory");
  cmd->add_option("--jobs", c.jobs, "worker cap")->check(CLI::PositiveNumber);
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  for (const auto& o : c.overrides) {
    const auto eq = o.find('='), dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw UsageError("--set expects section.key=value, got '" + o + "'");
    apply_override(cfg, o.substr(0, dot), o.substr(dot + 1, eq - dot - 1), o.substr(eq + 1));
  }
  return cfg;
}

// Flag beats environment beats config.
std::uint64_t resolve_seed(const Common& c, std::uint64_t from_config) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("VVLA_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      return v;
    } catch (const std::exception&) {
      throw UsageError(std::string("VVLA_SEED is not an unsigned integer: ") + env);
    }
  }
  return from_config;
}

// Refuses a non-empty directory unless forced; when forced, removes the
// listed outputs of a previous run so nothing stale survives.
void prepare_out(const Common& c, const std::vector<std::string>& owned) {
  const fs::path dir(c.out);
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError(c.out + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!c.force) throw UsageError("output directory " + c.out + " is not empty (use --force)");
    for (const auto& name : owned) fs::remove_all(dir / name);
  }
  fs::create_directories(dir);
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config_text;
  std::uint64_t seed = 0;
  std::string started = utc_now();
  Hasher inputs;
  std::vector<std::string> outputs;
  nlohmann::json extra = nlohmann::json::object();

  void write(const std::string& dir) const {
    nlohmann::json j = {{"command", command},
                        {"argv", argv},
                        {"config", config_text},
                        {"seed", seed},
                        {"started", started},
                        {"finished", utc_now()},
                        {"input_hash", inputs.hex()},
                        {"outputs", outputs}};
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    const std::string s = j.dump(2) + "\n";
    write_file_bytes((fs::path(dir) / "manifest.json").string(), {s.begin(), s.end()});
  }
};

void log_line(const std::string& s) { std::cerr << s << '\n'; }

void write_text(const fs::path& p, const std::string& s) { write_file_bytes(p.string(), {s.begin(), s.end()}); }

// ---------------------------------------------------------------- commands

struct GenArgs {
  Common c;
  std::string skills;
};

void cmd_gen_data(const GenArgs& a, Manifest& m) {
  RunConfig cfg = resolve_config(a.c);
  cfg.data.seed = resolve_seed(a.c, cfg.data.seed);
  const std::string skills = a.skills.empty() ? cfg.train.skills : a.skills;
  prepare_out(a.c, {"episodes", "manifest.jsonl", "manifest.json"});
  m.config_text = to_text(cfg);
  m.seed = cfg.data.seed;
  m.inputs.add(m.config_text);
  m.inputs.add(skills);
  const GenerationSummary sum =
      generate_dataset(a.c.out, cfg.data.episodes_per_cell, cfg.data.max_steps, cfg.data.seed, skills);
  nlohmann::json counts = nlohmann::json::object();
  int total = 0;
  for (const auto& [cell, n] : sum.counts) {
    const std::string key = std::string(1, EmbodimentSpec::from_id(cell.embodiment).letter()) + "/" +
                            skill_name(cell.skill);
    std::printf("%-14s %d episodes\n", key.c_str(), n);
    counts[key] = n;
    total += n;
  }
  std::printf("total          %d episodes\n", total);
  m.extra["episodes_per_cell"] = counts;
  m.outputs = {"manifest.jsonl", "episodes/"};
}

struct TrainArgs {
  Common c;
  std::string data;
  std::string loss_mode, mask, timesteps;
  std::optional<int> latents;
  std::string skills;
  bool resume = false;
};

void cmd_train(const TrainArgs& a, Manifest& m) {
  RunConfig cfg = resolve_config(a.c);
  if (!a.loss_mode.empty()) cfg.train.loss_mode = parse_loss_mode(a.loss_mode);
  if (!a.mask.empty()) cfg.model.mask = parse_mask_mode(a.mask);
  if (!a.timesteps.empty()) cfg.diffusion.timesteps = parse_timestep_mode(a.timesteps);
  if (a.latents) {
    if (*a.latents < 2) throw UsageError("--latents must be at least 2");
    cfg.model.n_latents = *a.latents;
    cfg.model.actions = 2 * (*a.latents - 1);
  }
  if (!a.skills.empty()) cfg.train.skills = a.skills;
  cfg.train.seed = resolve_seed(a.c, cfg.train.seed);
  const ModelConfig mcfg = model_config_for(cfg);

  if (a.resume) {
    if (fs::exists(a.c.out) && !fs::is_directory(a.c.out)) throw UsageError(a.c.out + " is not a directory");
    fs::create_directories(a.c.out);
  } else {
    prepare_out(a.c, {"checkpoint.vvck", "loss.csv", "manifest.json"});
  }
  m.config_text = to_text(cfg);
  m.seed = cfg.train.seed;
  m.inputs.add(m.config_text);
  m.inputs.add_file(fs::path(a.data) / "manifest.jsonl");

  const TrainDataset data = load_dataset(a.data, mcfg.frames(), mcfg.actions, cfg.train.stride, Vocab::standard(),
                                         mcfg.text_len, cfg.train.skills);
  log_line("dataset: " + std::to_string(data.episodes()) + " episodes, " + std::to_string(data.size()) +
           " windows; sequence length " + std::to_string(mcfg.seq_len()));
  TrainOptions opt;
  opt.out_dir = a.c.out;
  opt.resume = a.resume;
  opt.log = log_line;
  const TrainResult r = train(cfg, data, opt);
  m.extra["resumed_from"] = r.resumed_from;
  m.extra["checkpoint_hash"] = hex64(fnv1a64(encode_checkpoint(r.checkpoint)));
  m.outputs = {"checkpoint.vvck", "loss.csv"};
}

struct EvalArgs {
  Common c;
  std::string checkpoint;
  std::string policy = "model";
  std::string split = "in_domain";
  std::optional<int> trials, ddim_steps, batch, execute, max_replans;
  std::string infer_mode;
  std::string skills;
};

void cmd_eval(const EvalArgs& a, Manifest& m) {
  RunConfig cfg;
  std::optional<Checkpoint> ckpt;
  if (a.policy == "model") {
    if (a.checkpoint.empty()) throw UsageError("--checkpoint is required for the model policy");
    ckpt = load_checkpoint(a.checkpoint);
    cfg = parse_config(ckpt->config_text);
    if (!a.c.config_path.empty() || !a.c.overrides.empty()) {
      // Rollout settings may change at evaluation time; the model may not.
      RunConfig over = resolve_config(a.c);
      cfg.rollout = over.rollout;
    }
  } else {
    cfg = resolve_config(a.c);
  }
  RolloutConfig& rc = cfg.rollout;
  if (a.trials) rc.trials = *a.trials;
  if (a.ddim_steps) rc.ddim_steps = *a.ddim_steps;
  if (a.batch) rc.batch = *a.batch;
  if (a.execute) rc.execute = *a.execute;
  if (a.max_replans) rc.max_replans = *a.max_replans;
  if (!a.infer_mode.empty()) rc.infer_mode = parse_infer_mode(a.infer_mode);
  rc.seed = resolve_seed(a.c, rc.seed);
  const SplitSpec split = make_split(parse_split(a.split), a.skills.empty() ? "all" : a.skills);

  std::unique_ptr<ChunkPolicy> policy;
  const ModelConfig mcfg = model_config_for(cfg);
  if (a.policy == "model") {
    policy = std::make_unique<ModelPolicy>(model_params(*ckpt), mcfg, cfg.diffusion, rc.ddim_steps, rc.infer_mode);
  } else if (a.policy == "expert") {
    policy = std::make_unique<ExpertPolicy>(mcfg.actions, mcfg.patch);
  } else if (a.policy == "random") {
    policy = std::make_unique<RandomPolicy>(mcfg.actions);
  } else {
    throw UsageError("unknown policy '" + a.policy + "' (model, expert, random)");
  }

  prepare_out(a.c, {"success.csv", "trials.jsonl", "episodes", "imagined", "manifest.json"});
  m.config_text = to_text(cfg);
  m.seed = rc.seed;
  m.inputs.add(m.config_text);
  m.inputs.add(a.policy + "|" + a.split + "|" + a.skills);
  if (!a.checkpoint.empty() && a.policy == "model") m.inputs.add_file(a.checkpoint);

  RolloutOptions opt;
  opt.execute = std::min(rc.execute, policy->horizon());
  opt.max_replans = rc.max_replans;
  opt.batch = rc.batch;
  opt.jobs = a.c.jobs;
  const auto t0 = std::chrono::steady_clock::now();
  const Evaluation ev = evaluate(*policy, split, rc.trials, rc.seed, opt);
  write_archive(a.c.out, ev);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fputs(ev.table.to_csv().c_str(), stdout);
  log_line("evaluated " + std::to_string(ev.trials.size()) + " trials in " + std::to_string(static_cast<int>(secs)) +
           "s");
  m.extra["policy"] = a.policy;
  m.extra["split"] = a.split;
  m.extra["average_success"] = ev.table.average.rate();
  m.outputs = {"success.csv", "trials.jsonl", "episodes/", "imagined/"};
}

struct AnalyzeArgs {
  Common c;
  std::string archive;
};

void cmd_analyze(const AnalyzeArgs& a, Manifest& m) {
  const auto trials = read_archive(a.archive);
  if (trials.empty()) throw DataError("archive " + a.archive + " holds no trials");
  m.seed = 0;
  m.inputs.add_file(fs::path(a.archive) / "trials.jsonl");
  const Analysis an = analyze(trials);
  prepare_out(a.c, {"analysis.csv", "scatter.svg", "correlation.json", "manifest.json"});
  write_text(fs::path(a.c.out) / "analysis.csv", an.to_csv());
  write_text(fs::path(a.c.out) / "scatter.svg", an.to_svg());

  int imag = 0, exec = 0, scored = 0;
  for (const auto& t : an.trials) {
    imag += t.imagination_success;
    exec += t.execution_success;
    scored += t.similarity.has_value();
  }
  const double n = static_cast<double>(an.trials.size());
  nlohmann::json j = {{"trials", an.trials.size()},
                      {"scored", scored},
                      {"execution_success_rate", exec / n},
                      {"imagination_success_rate", imag / n}};
  if (an.correlation) {
    const auto& c = *an.correlation;
    j["mean_similarity_success"] = c.mean_success;
    j["mean_similarity_failure"] = c.mean_failure;
    j["difference"] = c.difference;
    j["point_biserial"] = c.point_biserial;
    j["auroc"] = c.auroc;
    std::printf("mean similarity: success %.4f, failure %.4f; AUROC %.4f\n", c.mean_success, c.mean_failure,
                c.auroc);
  } else {
    j["correlation_error"] = an.correlation_error;
    std::printf("correlation unavailable: %s\n", an.correlation_error.c_str());
  }
  std::printf("execution success %.4f, imagination success %.4f over %zu trials\n", exec / n, imag / n,
              an.trials.size());
  write_text(fs::path(a.c.out) / "correlation.json", j.dump(2) + "\n");
  m.outputs = {"analysis.csv", "scatter.svg", "correlation.json"};
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Forward passes allocate and free parameter-sized buffers every call; keep
  // them on the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Joint video-action diffusion policy on a 2D tabletop"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "generate expert demonstrations");
  add_common(g, gen.c);
  g->add_option("--skills", gen.skills, "comma-separated skill filter");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train the joint denoiser");
  add_common(t, tr.c);
  t->add_option("--data", tr.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--loss-mode", tr.loss_mode, "dual | no-video-loss | action-only");
  t->add_option("--mask", tr.mask, "bidirectional | causal");
  t->add_option("--timesteps", tr.timesteps, "sync | async");
  t->add_option("--latents", tr.latents, "video latents per clip (actions = 2 * (n - 1))");
  t->add_option("--skills", tr.skills, "comma-separated skill filter");
  t->add_flag("--resume", tr.resume, "continue from the checkpoint in --out");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "closed-loop evaluation");
  add_common(e, ev.c);
  e->add_option("--checkpoint", ev.checkpoint, "trained checkpoint")->check(CLI::ExistingFile);
  e->add_option("--policy", ev.policy, "model | expert | random");
  e->add_option("--split", ev.split, "in_domain | novel_objects | new_skills");
  e->add_option("--trials", ev.trials, "trials per task");
  e->add_option("--ddim-steps", ev.ddim_steps, "sampler steps");
  e->add_option("--infer-mode", ev.infer_mode, "joint | two_stage");
  e->add_option("--batch", ev.batch, "trials per model call");
  e->add_option("--execute", ev.execute, "actions executed per replan");
  e->add_option("--max-replans", ev.max_replans, "replan budget per trial");
  e->add_option("--skills", ev.skills, "comma-separated skill filter");

  AnalyzeArgs an;
  auto* z = app.add_subcommand("analyze", "imagination versus execution analysis");
  z->add_option("archive", an.archive, "evaluation output directory")->required()->check(CLI::ExistingDirectory);
  add_common(z, an.c, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  Manifest m;
  m.argv.assign(argv, argv + argc);
  try {
    std::string out;
    if (g->parsed()) {
      m.command = "gen-data";
      cmd_gen_data(gen, m);
      out = gen.c.out;
    } else if (t->parsed()) {
      m.command = "train";
      cmd_train(tr, m);
      out = tr.c.out;
    } else if (e->parsed()) {
      m.command = "eval";
      cmd_eval(ev, m);
      out = ev.c.out;
    } else {
      m.command = "analyze";
      cmd_analyze(an, m);
      out = an.c.out;
    }
    m.write(out);
    return 0;
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return 1;
  } catch (const NumericalError& err) {
    std::cerr << "numerical error: " << err.what() << '\n';
    return 3;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
}
