#include <doctest.h>

#include <random>

#include "vvla/codec.hpp"
#include "vvla/partition.hpp"
#include "vvla/text.hpp"

using namespace vvla;

namespace {

Clip random_clip(int frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  Clip c({frames, kFrameSize, kFrameSize, kFrameChannels});
  for (Index i = 0; i < c.size(); ++i) c[i] = u(rng);
  return c;
}

Index pixel_index(Index frame, Index r, Index c, Index ch) {
  return ((frame * kFrameSize + r) * kFrameSize + c) * kFrameChannels + ch;
}

}  // namespace

TEST_CASE("latent counts") {
  CHECK(n_latents(49) == 13);
  CHECK(n_latents(25) == 7);
  CHECK(n_latents(13) == 4);
  CHECK(n_latents(1) == 1);
  CHECK(n_frames(4) == 13);
  CHECK_THROWS(n_latents(12));
  CHECK_THROWS(n_latents(0));
}

TEST_CASE("encode shape and exact round trip") {
  const Clip clip = random_clip(13, 1);
  const LatentClip lat = encode(clip, 4);
  CHECK(lat.shape() == std::vector<Index>{4, 8, 8, 192});
  const Clip back = decode(lat, 4, kFrameChannels);
  CHECK(back.shape() == clip.shape());
  CHECK(back == clip);
  CHECK_THROWS(encode(random_clip(12, 2), 4));
  CHECK_THROWS(encode(clip, 5));
}

TEST_CASE("first latent depends on the first frame only") {
  const Clip clip = random_clip(13, 3);
  Clip other = random_clip(13, 4);
  for (Index i = 0; i < kFrameSize * kFrameSize * kFrameChannels; ++i) other[i] = clip[i];
  const LatentClip a = encode(clip, 4), b = encode(other, 4);
  CHECK(latent_tokens(a, 0) == latent_tokens(b, 0));
  CHECK_FALSE(latent_tokens(a, 1) == latent_tokens(b, 1));
}

TEST_CASE("decode of zeros and single-element perturbations") {
  const LatentClip zeros({4, 8, 8, 192});
  const Clip z = decode(zeros, 4, 3);
  CHECK(z.matrix().cwiseAbs().maxCoeff() == 0.f);

  const float delta = 0.5f;
  // Latent 1 (future frames 1..4): exactly one pixel moves by delta.
  LatentClip lat = encode(random_clip(13, 5), 4);
  const Clip base = decode(lat, 4, 3);
  const Index cell = ((1 * 8 + 2) * 8 + 3) * 192;  // latent 1, row 2, col 3
  // Channel order (t, dy, dx, ch): t = 2, dy = 1, dx = 3, ch = 2.
  lat[cell + ((2 * 4 + 1) * 4 + 3) * 3 + 2] += delta;
  const Clip moved = decode(lat, 4, 3);
  int changed = 0;
  for (Index i = 0; i < base.size(); ++i)
    if (moved[i] != base[i]) ++changed;
  CHECK(changed == 1);
  // Frame 1 + t = 3, pixel (2*4+1, 3*4+3), channel 2.
  CHECK(moved[pixel_index(3, 9, 15, 2)] - base[pixel_index(3, 9, 15, 2)] == doctest::Approx(delta));

  // Latent 0 replicas are averaged, so the observation pixel moves by delta / 4.
  LatentClip lat0 = encode(random_clip(13, 6), 4);
  const Clip base0 = decode(lat0, 4, 3);
  lat0[0] += delta;
  const Clip moved0 = decode(lat0, 4, 3);
  changed = 0;
  for (Index i = 0; i < base0.size(); ++i)
    if (moved0[i] != base0[i]) ++changed;
  CHECK(changed == 1);
  CHECK(moved0[0] - base0[0] == doctest::Approx(delta / 4));
}

TEST_CASE("raster flattening order") {
  Tensor<float> grid({2, 2, 1});
  for (Index i = 0; i < 4; ++i) grid[i] = static_cast<float>(i);
  const MatrixF tokens = flatten_raster(grid);
  CHECK(tokens.rows() == 4);
  CHECK(tokens(0, 0) == 0.f);  // (0,0)
  CHECK(tokens(1, 0) == 1.f);  // (0,1)
  CHECK(tokens(2, 0) == 2.f);  // (1,0)
  CHECK(tokens(3, 0) == 3.f);  // (1,1)
  CHECK(unflatten_raster(tokens, 2, 2) == grid);
  Tensor<float> one({1, 1, 5});
  CHECK(flatten_raster(one).rows() == 1);
}

TEST_CASE("model range maps are inverse") {
  MatrixF x(1, 3);
  x << 0.f, 0.5f, 1.f;
  const MatrixF y = to_model_range(x);
  CHECK(y(0, 0) == -1.f);
  CHECK(y(0, 1) == 0.f);
  CHECK(y(0, 2) == 1.f);
  CHECK(MatrixF(from_model_range(y)) == x);
}

TEST_CASE("frames and clips convert both ways") {
  std::vector<Frame> frames(5);
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i].at(1, 2, 0) = 0.1f * static_cast<float>(i);
  const Clip c = clip_from_frames(frames);
  CHECK(c.shape()[0] == 5);
  for (std::size_t i = 0; i < frames.size(); ++i) CHECK(frame_at(c, static_cast<Index>(i)) == frames[i]);
}

// ---------------------------------------------------------------- text

TEST_CASE("vocabulary reserves pad and unk and round trips") {
  const Vocab v = Vocab::standard();
  CHECK(v.id("<pad>") == kPadId);
  CHECK(v.id("<unk>") == kUnkId);
  CHECK(v.id("definitely-not-a-word") == kUnkId);
  CHECK(Vocab::parse(v.to_text()) == v);
  const Vocab small({"b", "a", "b"});
  CHECK(small.size() == 4);
  CHECK(small.id("a") == 2);
  CHECK(small.id("b") == 3);
  CHECK(small.to_text() == "<pad>\t0\n<unk>\t1\na\t2\nb\t3\n");
  CHECK_THROWS(Vocab::parse("<pad>\t0\n<unk>\t1\nb\t3\n"));
}

TEST_CASE("tokenize pads, truncates and maps unknown words") {
  const Vocab v({"pick", "up", "the", "red", "disk"});
  const auto t = tokenize("pick up the red disk", v, 8);
  CHECK(t.size() == 8);
  CHECK(t[5] == kPadId);
  CHECK(detokenize(t, v) == "pick up the red disk");
  CHECK(tokenize("pick up the red disk", v, 3).size() == 3);
  CHECK(tokenize("pick zebra", v, 3)[1] == kUnkId);
  CHECK(tokenize("", v, 2) == std::vector<int>{kPadId, kPadId});
}

TEST_CASE("every template word is in the standard vocabulary") {
  const Vocab v = Vocab::standard();
  for (int s = 0; s < kSkillCount; ++s)
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const TaskSpec task = sample_task(static_cast<Skill>(s), full_attribute_pool(), seed);
      const std::string text = instantiate_template(task);
      const auto ids = tokenize(text, v, 16);
      for (int id : ids) CHECK(id != kUnkId);
      CHECK(detokenize(ids, v) == text);
      CHECK(text.find(color_name(task.object(task.subject).color)) != std::string::npos);
    }
}

TEST_CASE("templates name the skill arguments") {
  TaskSpec t;
  t.skill = Skill::stack;
  t.objects = {{0, Shape::square, Color::red, 0.06f}, {1, Shape::disk, Color::blue, 0.06f}};
  t.subject = 0;
  t.target = 1;
  CHECK(instantiate_template(t) == "stack the red square on the blue disk");
}
