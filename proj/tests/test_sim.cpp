#include <doctest.h>

#include <cmath>
#include <set>

#include "vvla/codec.hpp"
#include "vvla/episode.hpp"
#include "vvla/sim.hpp"

using namespace vvla;

namespace {

TaskSpec pick_place_scene() {
  TaskSpec t;
  t.skill = Skill::pick_place;
  t.objects = {{0, Shape::disk, Color::red, 0.06f}, {1, Shape::plate, Color::blue, 0.11f},
               {2, Shape::square, Color::green, 0.06f}};
  t.subject = 0;
  t.target = 1;
  return t;
}

float linf(const Rgb& a, const Rgb& b) {
  return std::max({std::abs(a.r - b.r), std::abs(a.g - b.g), std::abs(a.b - b.b)});
}

int count_color(const Frame& f, const Rgb& c) {
  int n = 0;
  for (int r = 0; r < kFrameSize; ++r)
    for (int col = 0; col < kFrameSize; ++col)
      if (f.at(r, col, 0) == c.r && f.at(r, col, 1) == c.g && f.at(r, col, 2) == c.b) ++n;
  return n;
}

}  // namespace

TEST_CASE("palette entries are pairwise separated") {
  std::vector<Rgb> all{background_rgb(), stain_rgb(), EmbodimentSpec::A().gripper_rgb,
                       EmbodimentSpec::B().gripper_rgb};
  for (int i = 0; i < kColorCount; ++i) all.push_back(color_rgb(static_cast<Color>(i)));
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) CHECK(linf(all[i], all[j]) >= 0.25f);
}

TEST_CASE("reset is deterministic and seed dependent") {
  const auto task = pick_place_scene();
  const auto emb = EmbodimentSpec::A();
  CHECK(reset(task, emb, 7) == reset(task, emb, 7));
  const auto a = reset(task, emb, 7), b = reset(task, emb, 8);
  CHECK(a.objects[0] != b.objects[0]);
  for (std::size_t i = 0; i < a.objects.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      CHECK(std::hypot(a.objects[i].x - a.objects[j].x, a.objects[i].y - a.objects[j].y) >= 0.22f - 1e-6f);
}

TEST_CASE("task referencing an absent object is rejected") {
  auto task = pick_place_scene();
  task.target = 9;
  CHECK_THROWS_AS(reset(task, EmbodimentSpec::A(), 0), DataError);
}

TEST_CASE("step kinematics") {
  const auto task = pick_place_scene();
  const auto emb = EmbodimentSpec::A();
  WorldState s = reset(task, emb, 1);
  s.gripper.x = 0.2f;

  SUBCASE("zero delta keeps the pose") {
    Action a{};
    a[6] = 1.f;
    const auto n = step(task, emb, s, a);
    CHECK(n.gripper == s.gripper);
    CHECK(n.steps == s.steps + 1);
  }
  SUBCASE("gain scales translation") {
    Action a{};
    a[3] = 0.1f;
    a[6] = 1.f;
    CHECK(step(task, emb, s, a).gripper.x == doctest::Approx(0.25f));
  }
  SUBCASE("keypoint follows the gripper") {
    Action a{};
    a[3] = 0.1f;
    a[6] = 1.f;
    const auto before = keypoints(s).back(), after = keypoints(step(task, emb, s, a)).back();
    CHECK(before.id == kGripperKeypoint);
    CHECK(after.x - before.x == doctest::Approx(0.05f));
  }
  SUBCASE("closing next to a disk grasps it") {
    s.gripper.x = s.objects[0].x + 0.03f;
    s.gripper.y = s.objects[0].y;
    s.gripper.z = 0.2f;
    Action a{};
    a[6] = 0.f;
    const auto n = step(task, emb, s, a);
    CHECK(n.held == 0);
    CHECK(n.objects[0].x == n.gripper.x);
    const auto kps = keypoints(n);
    CHECK(kps[0].x == kps.back().x);
    CHECK(kps[0].y == kps.back().y);
    CHECK(kps.size() == 4);
  }
  SUBCASE("non-finite action is an error") {
    Action a{};
    a[3] = std::nanf("");
    CHECK_THROWS_AS(step(task, emb, s, a), NumericalError);
  }
}

TEST_CASE("render") {
  const auto emb = EmbodimentSpec::A();
  SUBCASE("empty scene is background only") {
    TaskSpec empty;
    empty.objects = {{0, Shape::bottle, Color::red, 0.05f}};
    empty.skill = Skill::topple;
    WorldState s = reset(empty, emb, 0);
    s.objects.clear();
    empty.objects.clear();
    s.gripper.x = 5.f;  // off the table
    const Frame f = render(empty, emb, s);
    CHECK(count_color(f, background_rgb()) == kFrameSize * kFrameSize);
  }
  SUBCASE("objects are visible and deterministic") {
    const auto task = pick_place_scene();
    WorldState s = reset(task, emb, 3);
    s.objects[0].x = 0.5f;
    s.objects[0].y = 0.5f;
    const Frame f = render(task, emb, s);
    CHECK(f == render(task, emb, s));
    for (const auto& o : task.objects) CHECK(count_color(f, color_rgb(o.color)) >= 4);
    const Rgb red = color_rgb(Color::red);
    CHECK(f.at(16, 16, 0) == red.r);
    CHECK(f.at(15, 15, 1) == red.g);
  }
}

TEST_CASE("success predicates") {
  auto task = pick_place_scene();
  WorldState s = reset(task, EmbodimentSpec::A(), 2);
  s.objects[0].x = s.objects[1].x;
  s.objects[0].y = s.objects[1].y;
  CHECK(check_success(s, task));
  s.objects[0].x = s.objects[1].x + 0.22f;
  CHECK_FALSE(check_success(s, task));

  TaskSpec st;
  st.skill = Skill::stack;
  st.objects = {{0, Shape::disk, Color::red, 0.06f}, {1, Shape::square, Color::blue, 0.06f}};
  st.subject = 0;
  st.target = 1;
  WorldState w = reset(st, EmbodimentSpec::A(), 2);
  w.objects[0] = {w.objects[1].x + 0.03f, w.objects[1].y, 0.f, true, 1};
  CHECK(check_success(w, st));
  w.objects[0].layer = 0;
  CHECK_FALSE(check_success(w, st));
}

TEST_CASE("expert phase table") {
  const auto task = pick_place_scene();
  const auto emb = EmbodimentSpec::A();
  WorldState s = reset(task, emb, 4);
  SUBCASE("at grasp waypoint the expert closes") {
    s.gripper.x = s.objects[0].x;
    s.gripper.y = s.objects[0].y;
    s.gripper.z = kWorkZ;
    CHECK(expert_action(task, emb, s)[6] < 0.5f);
  }
  SUBCASE("holding above the target descends") {
    s.gripper = {s.objects[1].x, s.objects[1].y, kCarryZ, 0.f, false};
    s.held = 0;
    s.objects[0].x = s.gripper.x;
    s.objects[0].y = s.gripper.y;
    CHECK(expert_action(task, emb, s)[5] < 0.f);
  }
  SUBCASE("completed task gives a zero action") {
    s.objects[0].x = s.objects[1].x;
    s.objects[0].y = s.objects[1].y;
    const Action a = expert_action(task, emb, s);
    for (int i = 0; i < 6; ++i) CHECK(a[static_cast<std::size_t>(i)] == 0.f);
    CHECK(a[6] == 1.f);
  }
}

TEST_CASE("expert solves every skill on both embodiments") {
  const AttributePool pool = full_attribute_pool();
  for (int e = 0; e < 2; ++e)
    for (int k = 0; k < kSkillCount; ++k) {
      int ok = 0, longest = 0;
      const int seeds = 500;
      for (int seed = 0; seed < seeds; ++seed) {
        const TaskSpec task = sample_task(static_cast<Skill>(k), pool, static_cast<std::uint64_t>(seed * 31 + k));
        const Simulator sim(task, EmbodimentSpec::from_id(e));
        const Episode ep = expert_episode(sim, static_cast<std::uint64_t>(seed), 60);
        ok += ep.success ? 1 : 0;
        longest = std::max(longest, static_cast<int>(ep.actions.size()));
      }
      INFO("skill " << skill_name(static_cast<Skill>(k)) << " embodiment " << e << " longest " << longest);
      CHECK(ok == seeds);
    }
}

TEST_CASE("replay reproduces recorded frames bitwise") {
  const TaskSpec task = sample_task(Skill::stack, full_attribute_pool(), 11);
  const Simulator sim(task, EmbodimentSpec::B());
  const Episode ep = expert_episode(sim, 5, 60);
  REQUIRE(ep.success);
  REQUIRE(ep.frames.size() == 1 + 2 * ep.actions.size());
  WorldState s = sim.reset(5);
  CHECK(sim.render(s) == ep.frames[0]);
  for (std::size_t i = 0; i < ep.actions.size(); ++i) {
    s = sim.step(s, ep.actions[i]);
    CHECK(sim.render(s) == ep.frames[2 * i + 2]);
  }
}

TEST_CASE("episode file round trip") {
  const TaskSpec task = sample_task(Skill::wipe, full_attribute_pool(), 3);
  const Simulator sim(task, EmbodimentSpec::A());
  const Episode ep = expert_episode(sim, 9, 60);
  CHECK(decode_episode(encode_episode(ep)) == ep);
  auto bytes = encode_episode(ep);
  bytes.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_episode(bytes), DataError);
  CHECK(task_from_json(task_to_json(task)).objects.size() == task.objects.size());
  CHECK(task_to_json(task_from_json(task_to_json(task))) == task_to_json(task));
}
