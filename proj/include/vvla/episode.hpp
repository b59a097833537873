#pragma once

// Recorded episodes, their binary file format, scene descriptions in JSON
// and the expert demonstration generator.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vvla/sim.hpp"

namespace vvla {

inline constexpr std::uint32_t kEpisodeVersion = 1;

struct Episode {
  std::uint8_t embodiment = 0;
  std::uint8_t task = 0;  // skill index
  bool success = false;
  std::string instruction;
  std::vector<Frame> frames;                   // 1 + 2 * actions.size() when complete
  std::vector<Action> actions;
  std::vector<std::vector<Keypoint>> keypoints;  // per frame, same ids in every frame

  friend bool operator==(const Episode&, const Episode&) = default;
};

std::vector<std::uint8_t> encode_episode(const Episode& ep);
Episode decode_episode(const std::vector<std::uint8_t>& bytes);
void save_episode(const std::string& path, const Episode& ep);
Episode load_episode(const std::string& path);

nlohmann::json task_to_json(const TaskSpec& task);
TaskSpec task_from_json(const nlohmann::json& j);

// Appends the two frames (and keypoints) recorded for one executed action.
void record_step(Episode& ep, const Simulator& sim, const WorldState& before, const Action& a);

// Runs the scripted expert from reset(seed) until success or max_steps.
Episode expert_episode(const Simulator& sim, std::uint64_t seed, int max_steps);

}  // namespace vvla
