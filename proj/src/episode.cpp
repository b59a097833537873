#include "vvla/episode.hpp"

#include "vvla/binary_io.hpp"
#include "vvla/text.hpp"

namespace vvla {

std::vector<std::uint8_t> encode_episode(const Episode& ep) {
  if (ep.frames.size() > 0xFFFF || ep.actions.size() > 0xFFFF) throw DataError("episode too long");
  if (ep.keypoints.size() != ep.frames.size()) throw DataError("episode needs keypoints for every frame");
  const std::size_t kp = ep.keypoints.empty() ? 0 : ep.keypoints.front().size();
  ByteWriter w;
  w.magic("VVLA");
  w.u32(kEpisodeVersion);
  w.u16(kFrameSize);
  w.u16(kFrameSize);
  w.u8(kFrameChannels);
  w.u16(static_cast<std::uint16_t>(ep.frames.size()));
  w.u16(static_cast<std::uint16_t>(ep.actions.size()));
  w.u8(ep.embodiment);
  w.u8(ep.task);
  w.u8(ep.success ? 1 : 0);
  w.str16(ep.instruction);
  for (const auto& f : ep.frames) w.f32s(f.pixels);
  for (const auto& a : ep.actions) w.f32s(a);
  w.u16(static_cast<std::uint16_t>(kp));
  for (const auto& frame_kps : ep.keypoints) {
    if (frame_kps.size() != kp) throw DataError("keypoint count changes within episode");
    for (const auto& k : frame_kps) {
      w.f32(static_cast<float>(k.id));
      w.f32(k.x);
      w.f32(k.y);
    }
  }
  return w.bytes();
}

Episode decode_episode(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "episode");
  r.expect_magic("VVLA");
  if (const auto v = r.u32(); v != kEpisodeVersion) throw DataError("unsupported episode version " + std::to_string(v));
  const int h = r.u16(), w = r.u16(), c = r.u8();
  if (h != kFrameSize || w != kFrameSize || c != kFrameChannels) throw DataError("episode frame shape unsupported");
  Episode ep;
  const int n_frames = r.u16(), n_actions = r.u16();
  ep.embodiment = r.u8();
  ep.task = r.u8();
  ep.success = r.u8() != 0;
  ep.instruction = r.str16();
  ep.frames.resize(static_cast<std::size_t>(n_frames));
  for (auto& f : ep.frames) r.f32s(f.pixels);
  ep.actions.resize(static_cast<std::size_t>(n_actions));
  for (auto& a : ep.actions) r.f32s(a);
  const int kp = r.u16();
  ep.keypoints.assign(static_cast<std::size_t>(n_frames), std::vector<Keypoint>(static_cast<std::size_t>(kp)));
  for (auto& frame_kps : ep.keypoints)
    for (auto& k : frame_kps) {
      k.id = static_cast<int>(r.f32());
      k.x = r.f32();
      k.y = r.f32();
    }
  if (!r.at_end()) throw DataError("episode: trailing bytes");
  return ep;
}

void save_episode(const std::string& path, const Episode& ep) { write_file_bytes(path, encode_episode(ep)); }
Episode load_episode(const std::string& path) { return decode_episode(read_file_bytes(path)); }

nlohmann::json task_to_json(const TaskSpec& task) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : task.objects)
    objects.push_back({{"id", o.id}, {"shape", shape_name(o.shape)}, {"color", color_name(o.color)}, {"radius", o.radius}});
  nlohmann::json j = {{"skill", skill_name(task.skill)},
                      {"objects", objects},
                      {"subject", task.subject},
                      {"target", task.target},
                      {"template", task.template_id}};
  if (task.stain)
    j["stain"] = {{"x0", task.stain->x0}, {"y", task.stain->y}, {"cells", task.stain->cells}, {"cell", task.stain->cell}};
  return j;
}

namespace {

template <typename Enum, typename NameFn>
Enum enum_by_name(const std::string& s, int count, NameFn name, const char* what) {
  for (int i = 0; i < count; ++i)
    if (s == name(static_cast<Enum>(i))) return static_cast<Enum>(i);
  throw DataError(std::string("unknown ") + what + " '" + s + "'");
}

}  // namespace

TaskSpec task_from_json(const nlohmann::json& j) {
  try {
    TaskSpec t;
    t.skill = parse_skill(j.at("skill").get<std::string>());
    for (const auto& o : j.at("objects")) {
      ObjectSpec spec;
      spec.id = o.at("id").get<int>();
      spec.shape = enum_by_name<Shape>(o.at("shape").get<std::string>(), 7, shape_name, "shape");
      spec.color = enum_by_name<Color>(o.at("color").get<std::string>(), kColorCount, color_name, "color");
      spec.radius = o.at("radius").get<float>();
      t.objects.push_back(spec);
    }
    t.subject = j.at("subject").get<int>();
    t.target = j.at("target").get<int>();
    t.template_id = j.at("template").get<int>();
    if (j.contains("stain")) {
      const auto& s = j.at("stain");
      t.stain = StainSpec{s.at("x0").get<float>(), s.at("y").get<float>(), s.at("cells").get<int>(),
                          s.at("cell").get<float>()};
    }
    t.validate();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed task description: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(e.what());
  }
}

void record_step(Episode& ep, const Simulator& sim, const WorldState& before, const Action& a) {
  for (const WorldState& s : sim.step_substates(before, a)) {
    ep.frames.push_back(sim.render(s));
    ep.keypoints.push_back(sim.keypoints(s));
  }
  ep.actions.push_back(a);
}

Episode expert_episode(const Simulator& sim, std::uint64_t seed, int max_steps) {
  Episode ep;
  ep.embodiment = sim.embodiment().id;
  ep.task = static_cast<std::uint8_t>(sim.task().skill);
  ep.instruction = instantiate_template(sim.task());
  WorldState s = sim.reset(seed);
  ep.frames.push_back(sim.render(s));
  ep.keypoints.push_back(sim.keypoints(s));
  while (!sim.check_success(s) && static_cast<int>(ep.actions.size()) < max_steps) {
    const Action a = sim.expert_action(s);
    record_step(ep, sim, s, a);
    s = sim.step(s, a);
  }
  ep.success = sim.check_success(s);
  return ep;
}

}  // namespace vvla
