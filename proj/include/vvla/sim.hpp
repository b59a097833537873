#pragma once

// Deterministic top-down tabletop world on the unit square.
//
// Actions are 7-vectors [droll, dpitch, dyaw, dx, dy, dz, grip]. Roll and
// pitch are accepted but inert; translation and yaw are scaled by the
// embodiment gain; grip < 0.5 closes the gripper.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vvla/errors.hpp"

namespace vvla {

using Action = std::array<float, 7>;

struct Rgb {
  float r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Colour palette shared by the renderer, the instruction templates and the
// keypoint detector. Pairwise L-infinity distance between any two entries,
// background and grippers included, is at least 0.25.
enum class Color : std::uint8_t { red, green, blue, yellow, purple, orange, cyan, pink, white, brown };
inline constexpr int kColorCount = 10;
Rgb color_rgb(Color c);
const char* color_name(Color c);
Rgb background_rgb();
Rgb stain_rgb();

enum class Shape : std::uint8_t { disk, square, triangle, bottle, sponge, bowl, plate };
const char* shape_name(Shape s);
bool is_graspable(Shape s);
bool is_receptacle(Shape s);  // plates and bowls: drawn under everything else

enum class Skill : std::uint8_t { pick_place, stack, move_near, topple, wipe, take_out };
inline constexpr int kSkillCount = 6;
const char* skill_name(Skill s);
Skill parse_skill(const std::string& name);

struct ObjectSpec {
  int id = 0;
  Shape shape = Shape::disk;
  Color color = Color::red;
  float radius = 0.06f;
};

// Horizontal strip of cells that a held sponge wipes clean.
struct StainSpec {
  float x0 = 0, y = 0;
  int cells = 8;
  float cell = 0.05f;
  float cell_center_x(int i) const { return x0 + cell * (static_cast<float>(i) + 0.5f); }
};

struct TaskSpec {
  Skill skill = Skill::pick_place;
  std::vector<ObjectSpec> objects;  // the scene
  int subject = 0;                  // object the skill acts on
  int target = -1;                  // target object id, -1 when the target is a region
  std::optional<StainSpec> stain;   // wipe target region
  int template_id = 0;

  const ObjectSpec& object(int id) const;
  void validate() const;
};

struct EmbodimentSpec {
  std::uint8_t id = 0;  // 0 = A, 1 = B
  float gain = 0.5f;
  Rgb gripper_rgb;

  static EmbodimentSpec A();
  static EmbodimentSpec B();
  static EmbodimentSpec from_id(int id);
  char letter() const { return id == 0 ? 'A' : 'B'; }
};

struct ObjectState {
  float x = 0, y = 0, yaw = 0;
  bool upright = true;
  int layer = 0;  // stacking order, higher is on top
  friend bool operator==(const ObjectState&, const ObjectState&) = default;
};

struct GripperState {
  float x = 0.5f, y = 0.08f, z = 0.5f, yaw = 0.f;
  bool open = true;
  friend bool operator==(const GripperState&, const GripperState&) = default;
};

inline constexpr int kNoObject = -1;
inline constexpr int kGripperKeypoint = 255;

struct WorldState {
  GripperState gripper;
  int held = kNoObject;
  std::vector<ObjectState> objects;  // indexed by ObjectSpec::id
  std::vector<std::uint8_t> swept;   // per stain cell
  std::uint8_t embodiment = 0;
  int steps = 0;
  friend bool operator==(const WorldState&, const WorldState&) = default;
};

// Simulation constants.
inline constexpr float kGraspRadius = 0.05f;
inline constexpr float kLowZ = 0.3f;          // below this the gripper touches the table
inline constexpr float kCarryZ = 0.5f;
inline constexpr float kWorkZ = 0.2f;
inline constexpr float kStackTolerance = 0.04f;
inline constexpr float kNearDistance = 0.1f;
inline constexpr float kWipeFraction = 0.8f;
inline constexpr int kFrameSize = 32;
inline constexpr int kFrameChannels = 3;
inline constexpr int kFramesPerStep = 2;
inline constexpr float kPixel = 1.f / kFrameSize;
inline constexpr float kStainHalfHeight = 0.03f;

struct Keypoint {
  int id = 0;
  float x = 0, y = 0;
  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

// H x W x C floats in [0, 1], row-major, row 0 at y = 0.
struct Frame {
  std::vector<float> pixels = std::vector<float>(kFrameSize * kFrameSize * kFrameChannels, 0.f);
  float& at(int row, int col, int ch) { return pixels[static_cast<std::size_t>((row * kFrameSize + col) * kFrameChannels + ch)]; }
  float at(int row, int col, int ch) const {
    return pixels[static_cast<std::size_t>((row * kFrameSize + col) * kFrameChannels + ch)];
  }
  friend bool operator==(const Frame&, const Frame&) = default;
};

class Simulator {
 public:
  Simulator(TaskSpec task, EmbodimentSpec emb);

  const TaskSpec& task() const { return task_; }
  const EmbodimentSpec& embodiment() const { return emb_; }

  // Seeded placement with min pairwise separation of twice the largest
  // radius; the gripper starts at the home pose.
  WorldState reset(std::uint64_t seed) const;
  WorldState step(const WorldState& s, const Action& a) const;
  Frame render(const WorldState& s) const;
  bool check_success(const WorldState& s) const;
  Action expert_action(const WorldState& s) const;
  std::vector<Keypoint> keypoints(const WorldState& s) const;

  // The two frames recorded for one action: a half-stride state and the
  // post-step state.
  std::array<WorldState, kFramesPerStep> step_substates(const WorldState& s, const Action& a) const;

  // Scene colours for the keypoint detector: objects by id plus the gripper.
  std::vector<std::pair<int, Rgb>> palette() const;

 private:
  TaskSpec task_;
  EmbodimentSpec emb_;
};

// Fixed affine map between simulator actions and the model's [-1, 1] range:
// rotations by 0.5, translations by 0.2, gripper {0, 1} -> {-1, 1}.
Action normalize_action(const Action& a);
Action denormalize_action(const Action& a);

// Free-function forms of the simulator operations.
WorldState reset(const TaskSpec& task, const EmbodimentSpec& emb, std::uint64_t seed);
WorldState step(const TaskSpec& task, const EmbodimentSpec& emb, const WorldState& s, const Action& a);
Frame render(const TaskSpec& task, const EmbodimentSpec& emb, const WorldState& s);
bool check_success(const WorldState& s, const TaskSpec& task);
Action expert_action(const TaskSpec& task, const EmbodimentSpec& emb, const WorldState& s);
std::vector<Keypoint> keypoints(const WorldState& s);

// Where the expert puts the subject down (pick_place, stack, move_near,
// take_out) given the current scene state.
struct PlaceTarget {
  float x = 0, y = 0;
};
PlaceTarget place_target(const TaskSpec& task, const WorldState& s);

// Colours and shapes a scene generator may draw from.
struct AttributePool {
  std::vector<Color> colors;
  std::vector<Shape> block_shapes;  // shapes for graspable blocks
};
AttributePool full_attribute_pool();

// Builds a random scene and task for `skill`. When `novel` is set, the
// subject is forced to carry one of novel.colors / novel.block_shapes.
TaskSpec sample_task(Skill skill, const AttributePool& pool, std::uint64_t seed,
                     const AttributePool* novel = nullptr);

}  // namespace vvla
