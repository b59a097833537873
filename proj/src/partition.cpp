#include "vvla/partition.hpp"

#include <algorithm>
#include <sstream>

namespace vvla {

std::vector<Cell> training_partition() {
  std::vector<Cell> cells{{0, Skill::pick_place}, {0, Skill::stack}};
  for (int k = 0; k < kSkillCount; ++k) cells.push_back({1, static_cast<Skill>(k)});
  return cells;
}

AttributePool novel_pool() { return {{Color::orange, Color::cyan}, {Shape::triangle}}; }

AttributePool training_pool(std::uint8_t embodiment) {
  AttributePool p = full_attribute_pool();
  if (embodiment != 0) return p;
  const AttributePool held = novel_pool();
  std::erase_if(p.colors, [&](Color c) { return std::ranges::find(held.colors, c) != held.colors.end(); });
  std::erase_if(p.block_shapes,
                [&](Shape s) { return std::ranges::find(held.block_shapes, s) != held.block_shapes.end(); });
  return p;
}

std::string to_string(SplitName s) {
  switch (s) {
    case SplitName::in_domain: return "in_domain";
    case SplitName::novel_objects: return "novel_objects";
    case SplitName::new_skills: return "new_skills";
  }
  throw UsageError("unknown split");
}

SplitName parse_split(const std::string& s) {
  std::string k = s;
  std::ranges::replace(k, '-', '_');
  for (SplitName n : {SplitName::in_domain, SplitName::novel_objects, SplitName::new_skills})
    if (k == to_string(n)) return n;
  throw UsageError("unknown split '" + s + "'");
}

std::vector<Skill> parse_skill_list(const std::string& skills) {
  std::vector<Skill> out;
  if (skills.empty() || skills == "all") {
    for (int k = 0; k < kSkillCount; ++k) out.push_back(static_cast<Skill>(k));
    return out;
  }
  std::istringstream in(skills);
  for (std::string item; std::getline(in, item, ',');) {
    if (item.empty()) continue;
    std::ranges::replace(item, '-', '_');
    out.push_back(parse_skill(item));
  }
  if (out.empty()) throw UsageError("empty skill list");
  return out;
}

bool skill_selected(const std::vector<Skill>& selected, Skill s) {
  return std::ranges::find(selected, s) != selected.end();
}

SplitSpec make_split(SplitName name, const std::string& skills) {
  const auto selected = parse_skill_list(skills);
  SplitSpec split;
  split.name = name;
  switch (name) {
    case SplitName::in_domain:
      split.cells = training_partition();
      break;
    case SplitName::novel_objects:
      split.cells = {{0, Skill::pick_place}, {0, Skill::stack}};
      split.novel_subject = true;
      break;
    case SplitName::new_skills:
    {
      const auto trained = training_partition();
      for (const Cell& c : trained) {
        const bool a_has = std::ranges::find(trained, Cell{0, c.skill}) != trained.end();
        if (c.embodiment == 1 && !a_has) split.cells.push_back({0, c.skill});
      }
    }
      break;
  }
  std::erase_if(split.cells, [&](const Cell& c) { return !skill_selected(selected, c.skill); });
  if (split.cells.empty()) throw UsageError("split " + to_string(name) + " is empty for skills '" + skills + "'");
  return split;
}

TaskSpec split_task(const SplitSpec& split, const Cell& cell, std::uint64_t seed) {
  const AttributePool pool = training_pool(cell.embodiment);
  if (split.novel_subject) {
    const AttributePool novel = novel_pool();
    return sample_task(cell.skill, pool, seed, &novel);
  }
  return sample_task(cell.skill, pool, seed);
}

}  // namespace vvla
