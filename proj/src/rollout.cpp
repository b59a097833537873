#include "vvla/rollout.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <random>

#include "vvla/binary_io.hpp"
#include "vvla/model.hpp"
#include "vvla/seeding.hpp"
#include "vvla/train.hpp"

namespace fs = std::filesystem;

namespace vvla {

// ---------------------------------------------------------------- policies

ModelPolicy::ModelPolicy(ParamStore<float> params, ModelConfig cfg, DiffusionConfig diffusion, int ddim_steps,
                         InferMode mode)
    : params_(std::move(params)),
      cfg_(std::move(cfg)),
      sched_(DiffusionSchedule::from_config(diffusion)),
      steps_(ddim_steps),
      mode_(mode),
      vocab_(Vocab::standard()) {
  cfg_.validate();
  if (cfg_.vocab_size != vocab_.size()) throw DataError("checkpoint vocabulary size does not match");
  ddim_timesteps(sched_.steps(), steps_);
}

std::vector<Plan> ModelPolicy::plan(const std::vector<PlanRequest>& requests) const {
  const int B = static_cast<int>(requests.size());
  if (B == 0) return {};
  const Index hw = cfg_.grid_tokens(), fut = cfg_.future_tokens(), c = cfg_.latent_channels(), K = cfg_.actions;
  ModelBatch<float> base;
  base.batch = B;
  base.obs.resize(B * hw, c);
  SampleRequest req;
  req.batch = B;
  req.video_rows = fut;
  req.video_cols = fut ? c : 0;
  req.action_rows = K;
  req.action_cols = cfg_.action_dim;
  req.steps = steps_;
  req.mode = mode_;
  for (int b = 0; b < B; ++b) {
    const auto& r = requests[static_cast<std::size_t>(b)];
    const auto tokens = tokenize(r.instruction, vocab_, cfg_.text_len);
    base.text.insert(base.text.end(), tokens.begin(), tokens.end());
    base.obs.middleRows(b * hw, hw) = observation_tokens(r.observation, cfg_);
    req.seeds.push_back(r.seed);
  }

  const EpsModel eps = [&](const JointState& x, const std::vector<int>& tv, const std::vector<int>& ta) {
    ModelBatch<float> in = base;
    in.future = x.video;
    in.actions = x.action;
    in.t_video = tv;
    in.t_action = ta;
    NoisePrediction<float> p = predict_noise(params_, cfg_, in);
    return JointState{std::move(p.video), std::move(p.action)};
  };
  const JointState out = ddim_sample(eps, sched_, req);

  std::vector<Plan> plans(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    Plan& p = plans[static_cast<std::size_t>(b)];
    for (Index k = 0; k < K; ++k) {
      Action a{};
      for (int d = 0; d < 7; ++d) a[static_cast<std::size_t>(d)] = out.action(b * K + k, d);
      p.actions.push_back(denormalize_action(a));
    }
    if (cfg_.video_tokens) {
      LatentClip lat({cfg_.n_latents, cfg_.grid(), cfg_.grid(), c});
      MatrixF rows(cfg_.n_latents * hw, c);
      rows.topRows(hw) = from_model_range(base.obs.middleRows(b * hw, hw));
      rows.bottomRows(fut) = from_model_range(out.video.middleRows(b * fut, fut));
      lat.matrix() = rows;
      p.imagined = std::move(lat);
    }
  }
  return plans;
}

std::vector<Plan> ExpertPolicy::plan(const std::vector<PlanRequest>& requests) const {
  std::vector<Plan> plans;
  for (const auto& r : requests) {
    Plan p;
    std::vector<Frame> frames{r.observation};
    WorldState s = r.state;
    for (int k = 0; k < horizon_; ++k) {
      const Action a = r.sim->expert_action(s);
      for (const WorldState& sub : r.sim->step_substates(s, a)) frames.push_back(r.sim->render(sub));
      s = r.sim->step(s, a);
      p.actions.push_back(a);
    }
    if ((frames.size() - 1) % kTemporalRate == 0) p.imagined = encode(clip_from_frames(frames), patch_);
    plans.push_back(std::move(p));
  }
  return plans;
}

std::vector<Plan> RandomPolicy::plan(const std::vector<PlanRequest>& requests) const {
  std::vector<Plan> plans;
  for (const auto& r : requests) {
    std::mt19937_64 rng(derive_seed(r.seed, 0x4a));
    std::uniform_real_distribution<float> u(-1.f, 1.f);
    Plan p;
    for (int k = 0; k < horizon_; ++k) {
      Action a{};
      for (float& v : a) v = u(rng);
      p.actions.push_back(denormalize_action(a));
    }
    plans.push_back(std::move(p));
  }
  return plans;
}

// ---------------------------------------------------------------- trials

namespace {

struct LiveTrial {
  const TrialSpec* spec;
  Simulator sim;
  WorldState state;
  TrialResult result;
  bool done = false;
};

std::vector<TrialResult> run_lockstep(const ChunkPolicy& policy, const TrialSpec* begin, const TrialSpec* end,
                                      const RolloutOptions& opt) {
  std::vector<LiveTrial> live;
  for (const TrialSpec* s = begin; s != end; ++s) {
    const EmbodimentSpec emb = EmbodimentSpec::from_id(s->cell.embodiment);
    LiveTrial t{s, Simulator(s->task, emb), {}, {}, false};
    t.state = t.sim.reset(derive_seed(s->seed, 2));
    t.result.spec = *s;
    t.result.executed.embodiment = emb.id;
    t.result.executed.task = static_cast<std::uint8_t>(s->task.skill);
    t.result.executed.instruction = instantiate_template(s->task);
    t.result.executed.frames.push_back(t.sim.render(t.state));
    t.result.executed.keypoints.push_back(t.sim.keypoints(t.state));
    t.done = opt.max_replans <= 0;
    live.push_back(std::move(t));
  }

  for (;;) {
    std::vector<LiveTrial*> active;
    for (auto& t : live)
      if (!t.done) active.push_back(&t);
    if (active.empty()) break;
    std::vector<PlanRequest> reqs;
    for (LiveTrial* t : active) {
      reqs.push_back({&t->sim, t->state, t->result.executed.frames.back(), t->result.executed.instruction,
                      derive_seed(t->spec->seed, {3, static_cast<std::uint64_t>(t->result.replans)})});
    }
    std::vector<Plan> plans = policy.plan(reqs);
    if (plans.size() != active.size()) throw DataError("policy returned the wrong number of plans");
    for (std::size_t i = 0; i < active.size(); ++i) {
      LiveTrial& t = *active[i];
      Plan& p = plans[i];
      TrialResult& r = t.result;
      r.replan_frames.push_back(static_cast<int>(r.executed.frames.size()) - 1);
      if (p.imagined) r.imagined.push_back(std::move(*p.imagined));
      ++r.replans;
      const int m = std::min<int>(opt.execute, static_cast<int>(p.actions.size()));
      for (int k = 0; k < m && !t.done; ++k) {
        const Action& a = p.actions[static_cast<std::size_t>(k)];
        try {
          record_step(r.executed, t.sim, t.state, a);
          t.state = t.sim.step(t.state, a);
        } catch (const std::runtime_error& e) {
          r.error = e.what();
          t.done = true;
          break;
        }
        if (t.sim.check_success(t.state)) {
          r.success = true;
          t.done = true;
        }
      }
      if (r.replans >= opt.max_replans) t.done = true;
    }
  }
  std::vector<TrialResult> out;
  for (auto& t : live) {
    t.result.executed.success = t.result.success;
    out.push_back(std::move(t.result));
  }
  return out;
}

void check_options(const ChunkPolicy& policy, const RolloutOptions& opt) {
  if (opt.execute < 1 || opt.execute > policy.horizon())
    throw UsageError("executed actions per replan must lie in [1, " + std::to_string(policy.horizon()) + "]");
  if (opt.batch < 1 || opt.jobs < 1) throw UsageError("batch and jobs must be positive");
  if (opt.max_replans < 0) throw UsageError("max replans must be non-negative");
}

}  // namespace

TrialResult run_trial(const ChunkPolicy& policy, const TrialSpec& spec, const RolloutOptions& opt) {
  check_options(policy, opt);
  return std::move(run_lockstep(policy, &spec, &spec + 1, opt).front());
}

std::vector<TrialResult> run_trials(const ChunkPolicy& policy, const std::vector<TrialSpec>& specs,
                                    const RolloutOptions& opt) {
  check_options(policy, opt);
  const std::size_t n = specs.size(), chunk = static_cast<std::size_t>(opt.batch);
  const std::size_t chunks = (n + chunk - 1) / chunk;
  std::vector<std::vector<TrialResult>> parts(chunks);
  auto work = [&](std::size_t c) {
    const std::size_t lo = c * chunk, hi = std::min(n, lo + chunk);
    parts[c] = run_lockstep(policy, specs.data() + lo, specs.data() + hi, opt);
  };
  // Chunk composition is fixed by the batch size, so worker count never
  // changes results.
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(opt.jobs), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) work(c);
  } else {
    std::vector<std::future<void>> fs;
    for (std::size_t w = 0; w < workers; ++w)
      fs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t c = w; c < chunks; c += workers) work(c);
      }));
    for (auto& f : fs) f.get();
  }
  std::vector<TrialResult> out;
  for (auto& p : parts)
    for (auto& r : p) out.push_back(std::move(r));
  return out;
}

std::vector<TrialSpec> make_trials(const SplitSpec& split, int trials_per_task, std::uint64_t seed) {
  if (split.cells.empty()) throw UsageError("split has no tasks");
  if (trials_per_task < 1) throw UsageError("trials per task must be positive");
  std::vector<TrialSpec> out;
  for (std::size_t c = 0; c < split.cells.size(); ++c)
    for (int i = 0; i < trials_per_task; ++i) {
      TrialSpec t;
      t.split = split.name;
      t.cell = split.cells[c];
      t.index = i;
      t.seed = derive_seed(seed, {static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(i)});
      t.task = split_task(split, t.cell, derive_seed(t.seed, 1));
      out.push_back(std::move(t));
    }
  return out;
}

std::string SuccessTable::to_csv() const {
  std::string out = "split,task,embodiment,trials,successes,rate\n";
  char buf[256];
  auto line = [&](const SuccessRow& r) {
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%d,%d,%.4f\n", r.split.c_str(), r.task.c_str(), r.embodiment.c_str(),
                  r.trials, r.successes, r.rate());
    out += buf;
  };
  for (const auto& r : rows) line(r);
  line(average);
  return out;
}

Evaluation evaluate(const ChunkPolicy& policy, const SplitSpec& split, int trials_per_task, std::uint64_t seed,
                    const RolloutOptions& opt) {
  Evaluation ev;
  ev.trials = run_trials(policy, make_trials(split, trials_per_task, seed), opt);
  const std::string name = to_string(split.name);
  for (const Cell& c : split.cells) {
    SuccessRow row{name, skill_name(c.skill), std::string(1, EmbodimentSpec::from_id(c.embodiment).letter())};
    for (const auto& t : ev.trials)
      if (t.spec.cell == c) {
        ++row.trials;
        row.successes += t.success ? 1 : 0;
      }
    ev.table.rows.push_back(row);
  }
  ev.table.average = {name, "average", "all"};
  for (const auto& r : ev.table.rows) {
    ev.table.average.trials += r.trials;
    ev.table.average.successes += r.successes;
  }
  return ev;
}

// ---------------------------------------------------------------- archive

std::vector<std::uint8_t> encode_latents(const LatentClip& clip) {
  ByteWriter w;
  w.magic("VVLT");
  w.u32(static_cast<std::uint32_t>(clip.rank()));
  for (Index e : clip.shape()) w.u32(static_cast<std::uint32_t>(e));
  w.f32s({clip.data(), static_cast<std::size_t>(clip.size())});
  return w.bytes();
}

LatentClip decode_latents(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "latent blob");
  r.expect_magic("VVLT");
  const auto rank = r.u32();
  if (rank > 8) throw DataError("latent blob: implausible rank");
  std::vector<Index> shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32());
  LatentClip clip(shape);
  r.f32s({clip.data(), static_cast<std::size_t>(clip.size())});
  if (!r.at_end()) throw DataError("latent blob: trailing bytes");
  return clip;
}

namespace {

std::string trial_id(const TrialSpec& s) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s_%c_%s_%04d", to_string(s.split).c_str(),
                EmbodimentSpec::from_id(s.cell.embodiment).letter(), skill_name(s.cell.skill), s.index);
  return buf;
}

}  // namespace

void write_archive(const std::string& dir, const Evaluation& ev) {
  fs::create_directories(fs::path(dir) / "episodes");
  fs::create_directories(fs::path(dir) / "imagined");
  std::string jsonl;
  for (const TrialResult& t : ev.trials) {
    const std::string id = trial_id(t.spec);
    const std::string ep_path = "episodes/" + id + ".vvla";
    save_episode((fs::path(dir) / ep_path).string(), t.executed);
    std::vector<std::string> imagined;
    for (std::size_t k = 0; k < t.imagined.size(); ++k) {
      char name[160];
      std::snprintf(name, sizeof name, "imagined/%s_r%02zu.vvlt", id.c_str(), k);
      write_file_bytes((fs::path(dir) / name).string(), encode_latents(t.imagined[k]));
      imagined.emplace_back(name);
    }
    nlohmann::json j = {{"id", id},
                        {"split", to_string(t.spec.split)},
                        {"skill", skill_name(t.spec.cell.skill)},
                        {"embodiment", std::string(1, EmbodimentSpec::from_id(t.spec.cell.embodiment).letter())},
                        {"index", t.spec.index},
                        {"seed", t.spec.seed},
                        {"success", t.success},
                        {"error", t.error},
                        {"replans", t.replans},
                        {"replan_frames", t.replan_frames},
                        {"scene", task_to_json(t.spec.task)},
                        {"episode", ep_path},
                        {"imagined", imagined}};
    jsonl += j.dump() + "\n";
  }
  write_file_bytes((fs::path(dir) / "trials.jsonl").string(), {jsonl.begin(), jsonl.end()});
  const std::string csv = ev.table.to_csv();
  write_file_bytes((fs::path(dir) / "success.csv").string(), {csv.begin(), csv.end()});
}

std::vector<ArchivedTrial> read_archive(const std::string& dir) {
  const fs::path p = fs::path(dir) / "trials.jsonl";
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  std::vector<ArchivedTrial> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ArchivedTrial t;
      t.id = j.at("id").get<std::string>();
      t.spec.split = parse_split(j.at("split").get<std::string>());
      t.spec.cell.skill = parse_skill(j.at("skill").get<std::string>());
      t.spec.cell.embodiment = j.at("embodiment").get<std::string>() == "A" ? 0 : 1;
      t.spec.index = j.at("index").get<int>();
      t.spec.seed = j.at("seed").get<std::uint64_t>();
      t.spec.task = task_from_json(j.at("scene"));
      t.success = j.at("success").get<bool>();
      t.error = j.at("error").get<std::string>();
      t.replan_frames = j.at("replan_frames").get<std::vector<int>>();
      t.executed = load_episode((fs::path(dir) / j.at("episode").get<std::string>()).string());
      for (const auto& name : j.at("imagined"))
        t.imagined.push_back(decode_latents(read_file_bytes((fs::path(dir) / name.get<std::string>()).string())));
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(p.string() + ": " + e.what());
    } catch (const UsageError& e) {
      throw DataError(p.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace vvla
