#pragma once

// Training partition and evaluation splits.
//
// Embodiment A trains on {pick_place, stack} with the novel attributes
// (two colours, one shape) removed from every scene; embodiment B trains on
// all six skills with the full attribute pool. Evaluation splits:
//   in_domain      every trained (embodiment, skill) cell, training pools
//   novel_objects  embodiment A on its skills, subject carries a held-out attribute
//   new_skills     embodiment A on the four skills only B was trained on

#include <cstdint>
#include <string>
#include <vector>

#include "vvla/sim.hpp"

namespace vvla {

struct Cell {
  std::uint8_t embodiment = 0;
  Skill skill = Skill::pick_place;
  friend bool operator==(const Cell&, const Cell&) = default;
};

std::vector<Cell> training_partition();
AttributePool training_pool(std::uint8_t embodiment);
AttributePool novel_pool();

enum class SplitName { in_domain, novel_objects, new_skills };
std::string to_string(SplitName s);
SplitName parse_split(const std::string& s);

struct SplitSpec {
  SplitName name = SplitName::in_domain;
  std::vector<Cell> cells;
  bool novel_subject = false;  // force a held-out attribute on the subject
};

// `skills` restricts the cells to the listed skills ("all" keeps everything).
SplitSpec make_split(SplitName name, const std::string& skills = "all");

// Comma-separated skill list, or "all".
std::vector<Skill> parse_skill_list(const std::string& skills);
bool skill_selected(const std::vector<Skill>& selected, Skill s);

// Task for trial `index` of `cell` under `split`, deterministic in the seed.
TaskSpec split_task(const SplitSpec& split, const Cell& cell, std::uint64_t seed);

}  // namespace vvla
