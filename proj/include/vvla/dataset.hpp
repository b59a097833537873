#pragma once

// Expert dataset generation, the on-disk dataset directory and the windowed
// in-memory training set.
//
// A dataset directory holds one episode file per demonstration and
// manifest.jsonl with one record per episode: path, skill, embodiment,
// split tags, the scene description and the seeds used.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vvla/codec.hpp"
#include "vvla/episode.hpp"
#include "vvla/partition.hpp"
#include "vvla/text.hpp"

namespace vvla {

struct ManifestRecord {
  std::string path;  // relative to the dataset directory
  Cell cell;
  std::vector<std::string> tags;
  TaskSpec task;
  std::uint64_t seed = 0;
  int actions = 0;
  bool success = false;
};

nlohmann::json to_json(const ManifestRecord& r);
ManifestRecord manifest_record_from_json(const nlohmann::json& j);
std::vector<ManifestRecord> read_manifest(const std::string& dir);

struct GenerationSummary {
  std::vector<std::pair<Cell, int>> counts;
  std::vector<ManifestRecord> records;
};

// Writes episodes_per_cell expert episodes for every training cell whose
// skill is selected. Episode bytes depend only on (seed, cell, index).
GenerationSummary generate_dataset(const std::string& dir, int episodes_per_cell, int max_steps, std::uint64_t seed,
                                   const std::string& skills = "all");

// Frames stored as one palette index per pixel; exact for rendered frames.
class FramePalette {
 public:
  std::vector<std::uint8_t> encode(const Frame& f);
  void decode(const std::uint8_t* codes, float* out) const;
  std::size_t size() const { return colors_.size(); }

 private:
  std::vector<Rgb> colors_;
};

struct TrainSample {
  std::vector<int> tokens;
  Clip clip;                            // N frames, padded by repeating the last one
  MatrixF actions;                      // K x 7, normalised, padded by repeating the last row
  std::vector<std::uint8_t> frame_valid;   // per frame
  std::vector<std::uint8_t> action_valid;  // per action
  std::uint8_t embodiment = 0;
  Skill skill = Skill::pick_place;
};

struct Window {
  std::size_t episode = 0;
  int offset = 0;  // first frame
};

// Sliding windows of N frames and K actions (N - 1 == 2K) at a frame stride;
// offsets that fall between two actions are skipped. Full windows are taken while they fit; if frames remain uncovered one more
// window is added and padded. Episodes shorter than N frames contribute
// nothing.
class TrainDataset {
 public:
  TrainDataset(int frames, int actions, int stride, int text_len);

  void add(const Episode& ep, const Vocab& vocab);

  std::size_t size() const { return windows_.size(); }
  std::size_t episodes() const { return episodes_.size(); }
  int skipped_short() const { return skipped_; }
  int frames_per_window() const { return frames_; }
  int actions_per_window() const { return actions_; }
  const Window& window(std::size_t i) const { return windows_.at(i); }
  TrainSample sample(std::size_t i) const;

 private:
  struct Stored {
    std::vector<int> tokens;
    std::vector<std::uint8_t> codes;  // frames x H x W
    int frames = 0;
    std::vector<Action> actions;      // normalised
    std::uint8_t embodiment = 0;
    Skill skill = Skill::pick_place;
  };
  int frames_, actions_, stride_, text_len_;
  FramePalette palette_;
  std::vector<Stored> episodes_;
  std::vector<Window> windows_;
  int skipped_ = 0;
};

TrainDataset build_dataset(const std::vector<Episode>& episodes, int frames, int actions, int stride,
                           const Vocab& vocab, int text_len);

// Loads every manifest episode whose skill is selected.
TrainDataset load_dataset(const std::string& dir, int frames, int actions, int stride, const Vocab& vocab,
                          int text_len, const std::string& skills = "all");

}  // namespace vvla
