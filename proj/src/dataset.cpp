#include "vvla/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "vvla/binary_io.hpp"
#include "vvla/seeding.hpp"

namespace fs = std::filesystem;

namespace vvla {

nlohmann::json to_json(const ManifestRecord& r) {
  return {{"path", r.path},
          {"skill", skill_name(r.cell.skill)},
          {"embodiment", std::string(1, EmbodimentSpec::from_id(r.cell.embodiment).letter())},
          {"tags", r.tags},
          {"scene", task_to_json(r.task)},
          {"seed", r.seed},
          {"actions", r.actions},
          {"success", r.success}};
}

ManifestRecord manifest_record_from_json(const nlohmann::json& j) {
  try {
    ManifestRecord r;
    r.path = j.at("path").get<std::string>();
    r.cell.skill = parse_skill(j.at("skill").get<std::string>());
    const auto emb = j.at("embodiment").get<std::string>();
    if (emb != "A" && emb != "B") throw DataError("unknown embodiment '" + emb + "'");
    r.cell.embodiment = emb == "A" ? 0 : 1;
    r.tags = j.at("tags").get<std::vector<std::string>>();
    r.task = task_from_json(j.at("scene"));
    r.seed = j.at("seed").get<std::uint64_t>();
    r.actions = j.at("actions").get<int>();
    r.success = j.at("success").get<bool>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest record: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(e.what());
  }
}

std::vector<ManifestRecord> read_manifest(const std::string& dir) {
  const fs::path p = fs::path(dir) / "manifest.jsonl";
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  std::vector<ManifestRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(p.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(manifest_record_from_json(j));
  }
  return out;
}

GenerationSummary generate_dataset(const std::string& dir, int episodes_per_cell, int max_steps, std::uint64_t seed,
                                   const std::string& skills) {
  if (episodes_per_cell < 1) throw UsageError("episodes per cell must be positive");
  const auto selected = parse_skill_list(skills);
  fs::create_directories(fs::path(dir) / "episodes");
  GenerationSummary summary;
  std::string manifest;
  for (const Cell& cell : training_partition()) {
    if (!skill_selected(selected, cell.skill)) continue;
    const EmbodimentSpec emb = EmbodimentSpec::from_id(cell.embodiment);
    const AttributePool pool = training_pool(cell.embodiment);
    for (int i = 0; i < episodes_per_cell; ++i) {
      const std::uint64_t ep_seed =
          derive_seed(seed, {cell.embodiment, static_cast<std::uint64_t>(cell.skill), static_cast<std::uint64_t>(i)});
      const Simulator sim(sample_task(cell.skill, pool, ep_seed), emb);
      const Episode ep = expert_episode(sim, ep_seed, max_steps);
      if (!ep.success) throw DataError("expert failed on " + std::string(skill_name(cell.skill)) + " episode " +
                                       std::to_string(i));
      char name[96];
      std::snprintf(name, sizeof name, "episodes/%c_%s_%04d.vvla", emb.letter(), skill_name(cell.skill), i);
      save_episode((fs::path(dir) / name).string(), ep);
      ManifestRecord rec{name, cell, {"train", std::string(1, emb.letter()), skill_name(cell.skill)},
                         sim.task(), ep_seed, static_cast<int>(ep.actions.size()), ep.success};
      manifest += to_json(rec).dump() + "\n";
      summary.records.push_back(std::move(rec));
    }
    summary.counts.emplace_back(cell, episodes_per_cell);
  }
  if (summary.records.empty()) throw UsageError("no training cells selected by '" + skills + "'");
  write_file_bytes((fs::path(dir) / "manifest.jsonl").string(), {manifest.begin(), manifest.end()});
  return summary;
}

// ---------------------------------------------------------------- palette

std::vector<std::uint8_t> FramePalette::encode(const Frame& f) {
  std::vector<std::uint8_t> codes(static_cast<std::size_t>(kFrameSize * kFrameSize));
  for (std::size_t p = 0; p < codes.size(); ++p) {
    const Rgb c{f.pixels[3 * p], f.pixels[3 * p + 1], f.pixels[3 * p + 2]};
    std::size_t k = 0;
    while (k < colors_.size() && !(colors_[k] == c)) ++k;
    if (k == colors_.size()) {
      if (colors_.size() == 256) throw DataError("frame palette overflow: more than 256 distinct colours");
      colors_.push_back(c);
    }
    codes[p] = static_cast<std::uint8_t>(k);
  }
  return codes;
}

void FramePalette::decode(const std::uint8_t* codes, float* out) const {
  for (std::size_t p = 0; p < static_cast<std::size_t>(kFrameSize * kFrameSize); ++p) {
    const Rgb& c = colors_[codes[p]];
    out[3 * p] = c.r;
    out[3 * p + 1] = c.g;
    out[3 * p + 2] = c.b;
  }
}

// ---------------------------------------------------------------- windows

TrainDataset::TrainDataset(int frames, int actions, int stride, int text_len)
    : frames_(frames), actions_(actions), stride_(stride), text_len_(text_len) {
  n_latents(frames);
  if (actions * kFramesPerStep != frames - 1)
    throw UsageError("window of " + std::to_string(frames) + " frames needs " + std::to_string((frames - 1) / 2) +
                     " actions");
  if (stride < 1) throw UsageError("window stride must be positive");
}

void TrainDataset::add(const Episode& ep, const Vocab& vocab) {
  const int n = static_cast<int>(ep.frames.size());
  if (n != 1 + kFramesPerStep * static_cast<int>(ep.actions.size()))
    throw DataError("episode frame and action counts disagree");
  if (n < frames_) {
    ++skipped_;
    return;
  }
  Stored s;
  s.tokens = tokenize(ep.instruction, vocab, text_len_);
  s.frames = n;
  for (const Frame& f : ep.frames) {
    const auto codes = palette_.encode(f);
    s.codes.insert(s.codes.end(), codes.begin(), codes.end());
  }
  for (const Action& a : ep.actions) s.actions.push_back(normalize_action(a));
  s.embodiment = ep.embodiment;
  s.skill = static_cast<Skill>(ep.task);
  const std::size_t id = episodes_.size();
  episodes_.push_back(std::move(s));

  // Windows start on action boundaries only, so odd offsets are skipped.
  int offset = 0, covered = 0;
  for (; offset + frames_ <= n; offset += stride_) {
    if (offset % kFramesPerStep != 0) continue;
    windows_.push_back({id, offset});
    covered = offset + frames_;
  }
  if (offset % kFramesPerStep != 0) offset += stride_;
  if (covered < n && offset < n) windows_.push_back({id, offset});
}

TrainSample TrainDataset::sample(std::size_t i) const {
  const Window& w = windows_.at(i);
  const Stored& s = episodes_[w.episode];
  TrainSample out;
  out.tokens = s.tokens;
  out.embodiment = s.embodiment;
  out.skill = s.skill;
  out.clip = Clip({frames_, kFrameSize, kFrameSize, kFrameChannels});
  const std::size_t per_code = kFrameSize * kFrameSize;
  const Index per_pixel = kFrameSize * kFrameSize * kFrameChannels;
  for (int f = 0; f < frames_; ++f) {
    const int src = std::min(w.offset + f, s.frames - 1);
    palette_.decode(s.codes.data() + static_cast<std::size_t>(src) * per_code, out.clip.data() + f * per_pixel);
    out.frame_valid.push_back(w.offset + f < s.frames ? 1 : 0);
  }
  out.actions = MatrixF(actions_, 7);
  const int first = w.offset / kFramesPerStep, total = static_cast<int>(s.actions.size());
  for (int k = 0; k < actions_; ++k) {
    const int src = std::min(first + k, total - 1);
    for (int d = 0; d < 7; ++d) out.actions(k, d) = s.actions[static_cast<std::size_t>(src)][static_cast<std::size_t>(d)];
    out.action_valid.push_back(first + k < total ? 1 : 0);
  }
  return out;
}

TrainDataset build_dataset(const std::vector<Episode>& episodes, int frames, int actions, int stride,
                           const Vocab& vocab, int text_len) {
  TrainDataset ds(frames, actions, stride, text_len);
  for (const Episode& ep : episodes) ds.add(ep, vocab);
  if (ds.skipped_short() > 0)
    std::cerr << "warning: " << ds.skipped_short() << " episode(s) shorter than " << frames << " frames skipped\n";
  if (ds.size() == 0) throw DataError("dataset is empty");
  return ds;
}

TrainDataset load_dataset(const std::string& dir, int frames, int actions, int stride, const Vocab& vocab,
                          int text_len, const std::string& skills) {
  const auto selected = parse_skill_list(skills);
  TrainDataset ds(frames, actions, stride, text_len);
  for (const ManifestRecord& r : read_manifest(dir)) {
    if (!skill_selected(selected, r.cell.skill)) continue;
    ds.add(load_episode((fs::path(dir) / r.path).string()), vocab);
  }
  if (ds.skipped_short() > 0)
    std::cerr << "warning: " << ds.skipped_short() << " episode(s) shorter than " << frames << " frames skipped\n";
  if (ds.size() == 0) throw DataError("dataset is empty");
  return ds;
}

}  // namespace vvla
