#include "vvla/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "vvla/seeding.hpp"

namespace vvla {

namespace {

constexpr float kHomeX = 0.5f, kHomeY = 0.08f, kHomeZ = 0.5f;
constexpr float kPlaceMinX = 0.12f, kPlaceMaxX = 0.88f;
constexpr float kPlaceMinY = 0.25f, kPlaceMaxY = 0.88f;
constexpr int kPlacementAttempts = 1000;
constexpr float kMaxTranslation = 0.2f;  // per-step command bound used by the expert
constexpr float kToppleYaw = 0.5f;
constexpr float kToppleRate = 0.05f;
constexpr float kToppleReach = 0.08f;
constexpr float kNearPlacement = 0.06f;
constexpr float kWipeReach = 0.06f;
constexpr float kTol = 1e-4f;

float clamp01(float v) { return std::clamp(v, 0.f, 1.f); }

float wrap_angle(float a) {
  constexpr float kPi = std::numbers::pi_v<float>;
  a = std::remainder(a, 2.f * kPi);
  return a;
}

float dist(float ax, float ay, float bx, float by) { return std::hypot(ax - bx, ay - by); }

float segment_distance(float px, float py, float ax, float ay, float bx, float by) {
  const float vx = bx - ax, vy = by - ay;
  const float len2 = vx * vx + vy * vy;
  float t = 0.f;
  if (len2 > 0.f) t = std::clamp(((px - ax) * vx + (py - ay) * vy) / len2, 0.f, 1.f);
  return dist(px, py, ax + t * vx, ay + t * vy);
}

// Distance from a point to the stain strip rectangle.
float strip_distance(const StainSpec& st, float x, float y) {
  const float x1 = st.x0 + st.cell * static_cast<float>(st.cells);
  const float dx = std::max({st.x0 - x, 0.f, x - x1});
  const float dy = std::max(std::abs(y - st.y) - kStainHalfHeight, 0.f);
  return std::hypot(dx, dy);
}

float clip_command(float v, float bound) { return std::clamp(v, -bound, bound); }

void blend(Frame& f, int row, int col, const Rgb& c) {
  f.at(row, col, 0) = c.r;
  f.at(row, col, 1) = c.g;
  f.at(row, col, 2) = c.b;
}

// Local coordinates of a pixel centre relative to a rotated body frame.
struct Local {
  float u, v;
};
Local to_local(float px, float py, float cx, float cy, float yaw) {
  const float dx = px - cx, dy = py - cy;
  const float c = std::cos(yaw), s = std::sin(yaw);
  return {c * dx + s * dy, -s * dx + c * dy};
}

bool inside_triangle(float u, float v, float r) {
  // Vertices (0,-1.2r), (-1.2r,0.6r), (1.2r,0.6r); centroid at the origin.
  if (v > 0.6f * r) return false;
  const float half = 1.2f * r * (v + 1.2f * r) / (1.8f * r);
  return v >= -1.2f * r && std::abs(u) <= half;
}

bool covers(const ObjectSpec& spec, const ObjectState& os, float px, float py) {
  const auto [u, v] = to_local(px, py, os.x, os.y, os.yaw);
  const float r = spec.radius;
  switch (spec.shape) {
    case Shape::disk:
    case Shape::plate:
      return u * u + v * v <= r * r;
    case Shape::square:
      return std::abs(u) <= 0.85f * r && std::abs(v) <= 0.85f * r;
    case Shape::triangle:
      return inside_triangle(u, v, r);
    case Shape::bottle:
      if (os.upright) return u * u + v * v <= r * r;
      return std::abs(u) <= 1.8f * r && std::abs(v) <= 0.7f * r;
    case Shape::sponge:
      return std::abs(u) <= r && std::abs(v) <= 0.65f * r;
    case Shape::bowl: {
      const float d2 = u * u + v * v;
      return d2 <= r * r && d2 >= 0.4f * r * r;
    }
  }
  return false;
}

bool gripper_covers(const EmbodimentSpec& emb, const GripperState& g, float px, float py) {
  const float half = 0.03f + 0.05f * g.z;
  const float band = 0.5f * kPixel;
  const auto [u, v] = to_local(px, py, g.x, g.y, g.yaw);
  if (emb.id == 0) {
    const float m = std::max(std::abs(u), std::abs(v));
    if (std::abs(m - half) > band) return false;
    if (g.open && std::abs(v) > std::abs(u) && std::abs(u) < 0.6f * half) return false;
    return true;
  }
  const float rr = std::hypot(u, v);
  if (std::abs(rr - half) > band) return false;
  if (g.open && std::abs(v) > 1.5f * std::abs(u)) return false;
  return true;
}

float default_radius(Shape s) {
  switch (s) {
    case Shape::disk:
    case Shape::square:
    case Shape::triangle:
      return 0.06f;
    case Shape::bottle:
      return 0.05f;
    case Shape::sponge:
      return 0.06f;
    case Shape::bowl:
    case Shape::plate:
      return 0.11f;
  }
  return 0.06f;
}

ObjectState& mut_object(WorldState& s, int id) { return s.objects.at(static_cast<std::size_t>(id)); }
const ObjectState& object_state(const WorldState& s, int id) { return s.objects.at(static_cast<std::size_t>(id)); }

int swept_count(const WorldState& s) {
  return static_cast<int>(std::count(s.swept.begin(), s.swept.end(), std::uint8_t{1}));
}

}  // namespace

// ---------------------------------------------------------------- palette

Rgb color_rgb(Color c) {
  switch (c) {
    case Color::red: return {0.9f, 0.1f, 0.1f};
    case Color::green: return {0.1f, 0.8f, 0.1f};
    case Color::blue: return {0.1f, 0.2f, 0.9f};
    case Color::yellow: return {0.9f, 0.9f, 0.1f};
    case Color::purple: return {0.6f, 0.1f, 0.8f};
    case Color::orange: return {1.0f, 0.55f, 0.0f};
    case Color::cyan: return {0.1f, 0.85f, 0.85f};
    case Color::pink: return {1.0f, 0.5f, 0.75f};
    case Color::white: return {0.97f, 0.97f, 0.97f};
    case Color::brown: return {0.55f, 0.3f, 0.1f};
  }
  throw UsageError("unknown color");
}

const char* color_name(Color c) {
  static constexpr const char* kNames[] = {"red",    "green", "blue", "yellow", "purple",
                                           "orange", "cyan",  "pink", "white",  "brown"};
  const auto i = static_cast<std::size_t>(c);
  if (i >= std::size(kNames)) throw UsageError("unknown color");
  return kNames[i];
}

Rgb background_rgb() { return {0.35f, 0.35f, 0.4f}; }
Rgb stain_rgb() { return {0.75f, 0.6f, 0.45f}; }

const char* shape_name(Shape s) {
  static constexpr const char* kNames[] = {"disk", "square", "triangle", "bottle", "sponge", "bowl", "plate"};
  const auto i = static_cast<std::size_t>(s);
  if (i >= std::size(kNames)) throw UsageError("unknown shape");
  return kNames[i];
}

bool is_graspable(Shape s) {
  return s == Shape::disk || s == Shape::square || s == Shape::triangle || s == Shape::sponge;
}

bool is_receptacle(Shape s) { return s == Shape::bowl || s == Shape::plate; }

const char* skill_name(Skill s) {
  static constexpr const char* kNames[] = {"pick_place", "stack", "move_near", "topple", "wipe", "take_out"};
  const auto i = static_cast<std::size_t>(s);
  if (i >= std::size(kNames)) throw UsageError("unknown skill");
  return kNames[i];
}

Skill parse_skill(const std::string& name) {
  for (int i = 0; i < kSkillCount; ++i) {
    const auto s = static_cast<Skill>(i);
    if (name == skill_name(s)) return s;
  }
  throw UsageError("unknown skill '" + name + "'");
}

// ---------------------------------------------------------------- specs

const ObjectSpec& TaskSpec::object(int id) const {
  for (const auto& o : objects)
    if (o.id == id) return o;
  throw DataError("task references absent object " + std::to_string(id));
}

void TaskSpec::validate() const {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].id != static_cast<int>(i)) throw DataError("object ids must be dense and ordered");
    for (std::size_t j = 0; j < i; ++j)
      if (objects[j].color == objects[i].color) throw DataError("object colors must be unique within a scene");
  }
  const ObjectSpec& subj = object(subject);
  switch (skill) {
    case Skill::pick_place:
      if (!is_graspable(subj.shape) || object(target).shape != Shape::plate)
        throw DataError("pick_place needs a graspable subject and a plate target");
      break;
    case Skill::stack:
    case Skill::move_near:
      if (!is_graspable(subj.shape) || is_receptacle(object(target).shape) || target == subject)
        throw DataError(std::string(skill_name(skill)) + " needs two distinct blocks");
      break;
    case Skill::topple:
      if (subj.shape != Shape::bottle) throw DataError("topple needs a bottle subject");
      break;
    case Skill::wipe:
      if (subj.shape != Shape::sponge || !stain) throw DataError("wipe needs a sponge subject and a stain");
      break;
    case Skill::take_out:
      if (!is_graspable(subj.shape) || object(target).shape != Shape::bowl)
        throw DataError("take_out needs a graspable subject and a bowl target");
      break;
  }
}

EmbodimentSpec EmbodimentSpec::A() { return {0, 0.5f, {0.05f, 0.05f, 0.05f}}; }
EmbodimentSpec EmbodimentSpec::B() { return {1, 0.4f, {0.5f, 1.0f, 0.5f}}; }
EmbodimentSpec EmbodimentSpec::from_id(int id) {
  if (id == 0) return A();
  if (id == 1) return B();
  throw DataError("unknown embodiment id " + std::to_string(id));
}

// ---------------------------------------------------------------- actions

namespace {
constexpr std::array<float, 7> kActionScale{kToppleYaw, kToppleYaw, kToppleYaw, kMaxTranslation,
                                            kMaxTranslation, kMaxTranslation, 0.5f};
}

Action normalize_action(const Action& a) {
  Action n{};
  for (std::size_t i = 0; i < 6; ++i) n[i] = a[i] / kActionScale[i];
  n[6] = a[6] * 2.f - 1.f;
  return n;
}

Action denormalize_action(const Action& a) {
  Action n{};
  for (std::size_t i = 0; i < 6; ++i) n[i] = a[i] * kActionScale[i];
  n[6] = (a[6] + 1.f) * 0.5f;
  return n;
}

// ---------------------------------------------------------------- dynamics

WorldState reset(const TaskSpec& task, const EmbodimentSpec& emb, std::uint64_t seed) {
  task.validate();
  std::mt19937_64 rng(derive_seed(seed, 0x5e7));
  std::uniform_real_distribution<float> ux(kPlaceMinX, kPlaceMaxX), uy(kPlaceMinY, kPlaceMaxY);

  WorldState s;
  s.gripper = {kHomeX, kHomeY, kHomeZ, 0.f, true};
  s.embodiment = emb.id;
  s.objects.resize(task.objects.size());

  float max_r = 0.f;
  for (const auto& o : task.objects) max_r = std::max(max_r, o.radius);
  const float sep = 2.f * max_r;

  if (task.stain) s.swept.assign(static_cast<std::size_t>(task.stain->cells), 0);

  std::vector<int> placed;
  for (const auto& o : task.objects) {
    if (task.skill == Skill::take_out && o.id == task.subject) continue;
    bool ok = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !ok; ++attempt) {
      const float x = ux(rng), y = uy(rng);
      ok = true;
      for (int p : placed)
        if (dist(x, y, object_state(s, p).x, object_state(s, p).y) < sep) ok = false;
      if (ok && task.stain && strip_distance(*task.stain, x, y) < o.radius + 0.05f) ok = false;
      if (ok) mut_object(s, o.id) = {x, y, 0.f, true, 0};
    }
    if (!ok) throw DataError("unsatisfiable placement for object " + std::to_string(o.id));
    placed.push_back(o.id);
  }
  if (task.skill == Skill::take_out) {
    const auto& bowl = object_state(s, task.target);
    mut_object(s, task.subject) = {bowl.x, bowl.y, 0.f, true, 1};
  }
  return s;
}

WorldState step(const TaskSpec& task, const EmbodimentSpec& emb, const WorldState& s, const Action& a) {
  for (float v : a)
    if (!std::isfinite(v)) throw NumericalError("non-finite action");
  WorldState n = s;
  const float ox = s.gripper.x, oy = s.gripper.y;
  n.gripper.x = clamp01(s.gripper.x + emb.gain * a[3]);
  n.gripper.y = clamp01(s.gripper.y + emb.gain * a[4]);
  n.gripper.z = clamp01(s.gripper.z + emb.gain * a[5]);
  const float dyaw = emb.gain * a[2];
  n.gripper.yaw = wrap_angle(s.gripper.yaw + dyaw);
  n.gripper.open = a[6] >= 0.5f;

  if (n.held != kNoObject) {
    auto& h = mut_object(n, n.held);
    h.x = n.gripper.x;
    h.y = n.gripper.y;
    h.yaw = n.gripper.yaw;
    if (task.stain && task.object(n.held).shape == Shape::sponge && n.gripper.z < kLowZ) {
      const StainSpec& st = *task.stain;
      for (int i = 0; i < st.cells; ++i)
        if (segment_distance(st.cell_center_x(i), st.y, ox, oy, n.gripper.x, n.gripper.y) <= kWipeReach)
          n.swept[static_cast<std::size_t>(i)] = 1;
    }
  }

  if (std::abs(dyaw) > kToppleRate && n.gripper.z < kLowZ) {
    for (const auto& o : task.objects) {
      auto& os = mut_object(n, o.id);
      if (o.shape == Shape::bottle && os.upright && dist(os.x, os.y, n.gripper.x, n.gripper.y) <= kToppleReach) {
        os.upright = false;
        os.yaw = n.gripper.yaw;
      }
    }
  }

  if (s.gripper.open && !n.gripper.open && n.held == kNoObject && n.gripper.z < kLowZ) {
    float best = kGraspRadius;
    int pick = kNoObject;
    for (const auto& o : task.objects) {
      if (!is_graspable(o.shape)) continue;
      const auto& os = object_state(n, o.id);
      const float d = dist(os.x, os.y, n.gripper.x, n.gripper.y);
      if (d <= best) {
        best = d;
        pick = o.id;
      }
    }
    if (pick != kNoObject) {
      n.held = pick;
      auto& h = mut_object(n, pick);
      h.x = n.gripper.x;
      h.y = n.gripper.y;
      h.yaw = n.gripper.yaw;
    }
  } else if (!s.gripper.open && n.gripper.open && n.held != kNoObject) {
    // A released object rests on top of everything its footprint overlaps.
    const float r = task.object(n.held).radius;
    int layer = 0;
    for (const auto& o : task.objects) {
      if (o.id == n.held || is_receptacle(o.shape)) continue;
      const auto& os = object_state(n, o.id);
      if (dist(os.x, os.y, n.gripper.x, n.gripper.y) < o.radius + r) layer = std::max(layer, os.layer + 1);
    }
    mut_object(n, n.held).layer = layer;
    n.held = kNoObject;
  }
  n.steps = s.steps + 1;
  return n;
}

// ---------------------------------------------------------------- rendering

Frame render(const TaskSpec& task, const EmbodimentSpec& emb, const WorldState& s) {
  Frame f;
  const Rgb bg = background_rgb();
  for (int r = 0; r < kFrameSize; ++r)
    for (int c = 0; c < kFrameSize; ++c) blend(f, r, c, bg);

  auto pixel_x = [](int c) { return (static_cast<float>(c) + 0.5f) * kPixel; };

  if (task.stain) {
    const StainSpec& st = *task.stain;
    const Rgb sc = stain_rgb();
    for (int r = 0; r < kFrameSize; ++r) {
      const float py = pixel_x(r);
      if (std::abs(py - st.y) > kStainHalfHeight) continue;
      for (int c = 0; c < kFrameSize; ++c) {
        const float px = pixel_x(c);
        const int cell = static_cast<int>(std::floor((px - st.x0) / st.cell));
        if (cell < 0 || cell >= st.cells || s.swept[static_cast<std::size_t>(cell)]) continue;
        blend(f, r, c, sc);
      }
    }
  }

  std::vector<int> order;
  for (const auto& o : task.objects) order.push_back(o.id);
  auto rank = [&](int id) {
    const auto& spec = task.object(id);
    if (is_receptacle(spec.shape)) return -1;
    if (id == s.held) return 1 << 20;
    return object_state(s, id).layer;
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rank(a) < rank(b); });

  for (int id : order) {
    const auto& spec = task.object(id);
    const auto& os = object_state(s, id);
    const Rgb col = color_rgb(spec.color);
    for (int r = 0; r < kFrameSize; ++r)
      for (int c = 0; c < kFrameSize; ++c)
        if (covers(spec, os, pixel_x(c), pixel_x(r))) blend(f, r, c, col);
  }
  for (int r = 0; r < kFrameSize; ++r)
    for (int c = 0; c < kFrameSize; ++c)
      if (gripper_covers(emb, s.gripper, pixel_x(c), pixel_x(r))) blend(f, r, c, emb.gripper_rgb);
  return f;
}

// ---------------------------------------------------------------- task logic

PlaceTarget place_target(const TaskSpec& task, const WorldState& s) {
  const auto& subj = object_state(s, task.subject);
  switch (task.skill) {
    case Skill::pick_place:
    case Skill::stack: {
      const auto& t = object_state(s, task.target);
      return {t.x, t.y};
    }
    case Skill::move_near: {
      const auto& t = object_state(s, task.target);
      float ux = subj.x - t.x, uy = subj.y - t.y;
      const float len = std::hypot(ux, uy);
      if (len < 1e-6f) {
        ux = t.x < 0.5f ? 1.f : -1.f;
        uy = 0.f;
      } else {
        ux /= len;
        uy /= len;
      }
      return {t.x + kNearPlacement * ux, t.y + kNearPlacement * uy};
    }
    case Skill::take_out: {
      const auto& b = object_state(s, task.target);
      float ux = 0.5f - b.x, uy = 0.55f - b.y;
      const float len = std::hypot(ux, uy);
      if (len < 0.05f) {
        ux = b.x < 0.5f ? 1.f : -1.f;
        uy = 0.f;
      } else {
        ux /= len;
        uy /= len;
      }
      return {clamp01(b.x + 0.25f * ux), clamp01(b.y + 0.25f * uy)};
    }
    case Skill::topple:
    case Skill::wipe:
      return {subj.x, subj.y};
  }
  return {subj.x, subj.y};
}

bool check_success(const WorldState& s, const TaskSpec& task) {
  const auto& subj = object_state(s, task.subject);
  const bool held = s.held == task.subject;
  switch (task.skill) {
    case Skill::pick_place: {
      const auto& t = object_state(s, task.target);
      return !held && dist(subj.x, subj.y, t.x, t.y) <= task.object(task.target).radius;
    }
    case Skill::stack: {
      const auto& t = object_state(s, task.target);
      return !held && s.held != task.target && dist(subj.x, subj.y, t.x, t.y) <= kStackTolerance &&
             subj.layer > t.layer;
    }
    case Skill::move_near: {
      const auto& t = object_state(s, task.target);
      return !held && dist(subj.x, subj.y, t.x, t.y) < kNearDistance;
    }
    case Skill::topple:
      return !subj.upright;
    case Skill::wipe:
      return !s.swept.empty() &&
             static_cast<float>(swept_count(s)) >= kWipeFraction * static_cast<float>(s.swept.size());
    case Skill::take_out: {
      const auto& b = object_state(s, task.target);
      return !held && dist(subj.x, subj.y, b.x, b.y) > task.object(task.target).radius;
    }
  }
  return false;
}

namespace {

// Drives the gripper toward (x, y, z) with gain-compensated, clipped commands.
Action move_toward(const EmbodimentSpec& emb, const GripperState& g, float x, float y, float z, bool open) {
  Action a{};
  a[3] = clip_command((x - g.x) / emb.gain, kMaxTranslation);
  a[4] = clip_command((y - g.y) / emb.gain, kMaxTranslation);
  a[5] = clip_command((z - g.z) / emb.gain, kMaxTranslation);
  a[6] = open ? 1.f : 0.f;
  return a;
}

bool above(const GripperState& g, float x, float y) { return dist(g.x, g.y, x, y) <= kTol; }

// approach -> descend -> close, shared by every grasping skill.
Action acquire(const EmbodimentSpec& emb, const GripperState& g, float x, float y) {
  if (!above(g, x, y)) {
    if (g.z < kCarryZ - kTol) return move_toward(emb, g, g.x, g.y, kCarryZ, true);
    return move_toward(emb, g, x, y, g.z, true);
  }
  if (g.z > kWorkZ + kTol) return move_toward(emb, g, x, y, kWorkZ, true);
  Action a{};
  a[6] = 0.f;
  return a;
}

}  // namespace

Action expert_action(const TaskSpec& task, const EmbodimentSpec& emb, const WorldState& s) {
  const GripperState& g = s.gripper;
  if (check_success(s, task)) {
    Action a{};
    a[6] = g.open ? 1.f : 0.f;
    return a;
  }
  const auto& subj = object_state(s, task.subject);

  // A closed gripper that holds nothing useful opens and lifts first.
  if (!g.open && s.held != task.subject) {
    Action a = move_toward(emb, g, g.x, g.y, std::max(g.z, kCarryZ), true);
    return a;
  }

  switch (task.skill) {
    case Skill::topple: {
      if (!above(g, subj.x, subj.y)) {
        if (g.z < kCarryZ - kTol) return move_toward(emb, g, g.x, g.y, kCarryZ, true);
        return move_toward(emb, g, subj.x, subj.y, g.z, true);
      }
      if (g.z > kWorkZ + kTol) return move_toward(emb, g, subj.x, subj.y, kWorkZ, true);
      Action a{};
      a[2] = kToppleYaw;
      a[6] = 1.f;
      return a;
    }
    case Skill::wipe: {
      if (s.held != task.subject) return acquire(emb, g, subj.x, subj.y);
      const StainSpec& st = *task.stain;
      int next = 0;
      while (next < st.cells && s.swept[static_cast<std::size_t>(next)]) ++next;
      if (next >= st.cells) throw DataError("wipe expert: strip already clean");
      return move_toward(emb, g, st.cell_center_x(next), st.y, kWorkZ, false);
    }
    case Skill::pick_place:
    case Skill::stack:
    case Skill::move_near:
    case Skill::take_out: {
      if (s.held != task.subject) return acquire(emb, g, subj.x, subj.y);
      const PlaceTarget p = place_target(task, s);
      if (!above(g, p.x, p.y)) {
        if (g.z < kCarryZ - kTol) return move_toward(emb, g, g.x, g.y, kCarryZ, false);
        return move_toward(emb, g, p.x, p.y, g.z, false);
      }
      if (g.z > kWorkZ + kTol) return move_toward(emb, g, p.x, p.y, kWorkZ, false);
      Action a{};
      a[6] = 1.f;
      return a;
    }
  }
  throw DataError("expert: unreachable phase");
}

std::vector<Keypoint> keypoints(const WorldState& s) {
  std::vector<Keypoint> out;
  out.reserve(s.objects.size() + 1);
  for (std::size_t i = 0; i < s.objects.size(); ++i) out.push_back({static_cast<int>(i), s.objects[i].x, s.objects[i].y});
  out.push_back({kGripperKeypoint, s.gripper.x, s.gripper.y});
  return out;
}

// ---------------------------------------------------------------- Simulator

Simulator::Simulator(TaskSpec task, EmbodimentSpec emb) : task_(std::move(task)), emb_(emb) { task_.validate(); }

WorldState Simulator::reset(std::uint64_t seed) const { return vvla::reset(task_, emb_, seed); }
WorldState Simulator::step(const WorldState& s, const Action& a) const { return vvla::step(task_, emb_, s, a); }
Frame Simulator::render(const WorldState& s) const { return vvla::render(task_, emb_, s); }
bool Simulator::check_success(const WorldState& s) const { return vvla::check_success(s, task_); }
Action Simulator::expert_action(const WorldState& s) const { return vvla::expert_action(task_, emb_, s); }
std::vector<Keypoint> Simulator::keypoints(const WorldState& s) const { return vvla::keypoints(s); }

std::array<WorldState, kFramesPerStep> Simulator::step_substates(const WorldState& s, const Action& a) const {
  Action half = a;
  for (int i = 0; i < 6; ++i) half[static_cast<std::size_t>(i)] *= 0.5f;
  return {step(s, half), step(s, a)};
}

std::vector<std::pair<int, Rgb>> Simulator::palette() const {
  std::vector<std::pair<int, Rgb>> out;
  for (const auto& o : task_.objects) out.emplace_back(o.id, color_rgb(o.color));
  out.emplace_back(kGripperKeypoint, emb_.gripper_rgb);
  return out;
}

// ---------------------------------------------------------------- scenes

AttributePool full_attribute_pool() {
  AttributePool p;
  for (int i = 0; i < kColorCount; ++i) p.colors.push_back(static_cast<Color>(i));
  p.block_shapes = {Shape::disk, Shape::square, Shape::triangle};
  return p;
}

TaskSpec sample_task(Skill skill, const AttributePool& pool, std::uint64_t seed, const AttributePool* novel) {
  if (pool.colors.size() < 4 || pool.block_shapes.empty()) throw UsageError("attribute pool too small");
  std::mt19937_64 rng(derive_seed(seed, 0x7a5c));
  auto pick = [&](const auto& v) { return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)]; };

  std::vector<Color> used;
  auto fresh_color = [&](const std::vector<Color>& from) {
    std::vector<Color> avail;
    for (Color c : from)
      if (std::find(used.begin(), used.end(), c) == used.end()) avail.push_back(c);
    if (avail.empty()) throw UsageError("attribute pool has too few colors");
    const Color c = pick(avail);
    used.push_back(c);
    return c;
  };

  TaskSpec t;
  t.skill = skill;
  t.template_id = static_cast<int>(skill);
  auto add = [&](Shape shape, Color color) {
    const int id = static_cast<int>(t.objects.size());
    t.objects.push_back({id, shape, color, default_radius(shape)});
    return id;
  };

  // Subject attributes, optionally forced into the novel pool.
  Color subject_color{};
  Shape subject_shape = pick(pool.block_shapes);
  bool novel_color = false;
  if (novel) {
    const bool has_colors = !novel->colors.empty(), has_shapes = !novel->block_shapes.empty();
    if (!has_colors && !has_shapes) throw UsageError("empty novel attribute pool");
    novel_color = has_colors && (!has_shapes || std::bernoulli_distribution(0.5)(rng));
    if (!novel_color) subject_shape = pick(novel->block_shapes);
  }
  subject_color = novel_color ? fresh_color(novel->colors) : fresh_color(pool.colors);

  switch (skill) {
    case Skill::pick_place:
      t.subject = add(subject_shape, subject_color);
      t.target = add(Shape::plate, fresh_color(pool.colors));
      break;
    case Skill::stack:
    case Skill::move_near:
      t.subject = add(subject_shape, subject_color);
      t.target = add(pick(pool.block_shapes), fresh_color(pool.colors));
      break;
    case Skill::topple:
      t.subject = add(Shape::bottle, subject_color);
      break;
    case Skill::wipe: {
      t.subject = add(Shape::sponge, subject_color);
      StainSpec st;
      st.x0 = std::uniform_real_distribution<float>(0.1f, 0.5f)(rng);
      st.y = std::uniform_real_distribution<float>(0.3f, 0.85f)(rng);
      t.stain = st;
      break;
    }
    case Skill::take_out:
      t.subject = add(subject_shape, subject_color);
      t.target = add(Shape::bowl, fresh_color(pool.colors));
      break;
  }
  add(pick(pool.block_shapes), fresh_color(pool.colors));  // distractor
  t.validate();
  return t;
}

}  // namespace vvla
