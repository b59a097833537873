#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "vvla/binary_io.hpp"
#include "vvla/dataset.hpp"
#include "vvla/model.hpp"
#include "vvla/rollout.hpp"
#include "vvla/train.hpp"

using namespace vvla;
namespace fs = std::filesystem;

namespace {

RolloutOptions options(int execute = 3, int max_replans = 20) {
  RolloutOptions o;
  o.execute = execute;
  o.max_replans = max_replans;
  o.batch = 16;
  return o;
}

bool uses_attribute(const TaskSpec& t, const AttributePool& pool) {
  for (const auto& o : t.objects) {
    if (std::find(pool.colors.begin(), pool.colors.end(), o.color) != pool.colors.end()) return true;
    if (std::find(pool.block_shapes.begin(), pool.block_shapes.end(), o.shape) != pool.block_shapes.end()) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("split definitions") {
  const SplitSpec in = make_split(SplitName::in_domain);
  CHECK(in.cells.size() == 8);
  const SplitSpec novel = make_split(SplitName::novel_objects);
  CHECK(novel.cells.size() == 2);
  for (const Cell& c : novel.cells) CHECK(c.embodiment == 0);
  const SplitSpec fresh = make_split(SplitName::new_skills);
  REQUIRE(fresh.cells.size() == 4);
  const auto trained = training_partition();
  for (const Cell& c : fresh.cells) {
    CHECK(c.embodiment == 0);
    CHECK(std::find(trained.begin(), trained.end(), c) == trained.end());
    CHECK(std::find(trained.begin(), trained.end(), Cell{1, c.skill}) != trained.end());
  }
  CHECK(make_split(SplitName::in_domain, "pick_place").cells.size() == 2);
  CHECK_THROWS_AS(make_split(SplitName::new_skills, "pick_place"), UsageError);
  CHECK_THROWS_AS(parse_split("nowhere"), UsageError);
}

TEST_CASE("generalization splits are absent from the training manifest") {
  const fs::path dir = fs::temp_directory_path() / "vvla_hygiene";
  fs::remove_all(dir);
  generate_dataset(dir.string(), 30, 60, 5);
  const auto records = read_manifest(dir.string());
  CHECK(records.size() == 30 * training_partition().size());
  const AttributePool novel = novel_pool();
  std::set<std::pair<int, int>> cells;
  for (const auto& r : records) {
    cells.insert({r.cell.embodiment, static_cast<int>(r.cell.skill)});
    CHECK(std::find(r.tags.begin(), r.tags.end(), "train") != r.tags.end());
    if (r.cell.embodiment == 0) CHECK_FALSE(uses_attribute(r.task, novel));
  }
  for (const Cell& c : make_split(SplitName::new_skills).cells)
    CHECK(cells.count({c.embodiment, static_cast<int>(c.skill)}) == 0);
  for (const auto& t : make_trials(make_split(SplitName::novel_objects), 50, 1)) {
    const auto& subj = t.task.object(t.task.subject);
    const bool novel_color = std::find(novel.colors.begin(), novel.colors.end(), subj.color) != novel.colors.end();
    const bool novel_shape =
        std::find(novel.block_shapes.begin(), novel.block_shapes.end(), subj.shape) != novel.block_shapes.end();
    CHECK((novel_color || novel_shape));
  }
  fs::remove_all(dir);
}

TEST_CASE("dataset generation is seeded") {
  const fs::path a = fs::temp_directory_path() / "vvla_gen_a", b = fs::temp_directory_path() / "vvla_gen_b";
  fs::remove_all(a);
  fs::remove_all(b);
  generate_dataset(a.string(), 3, 60, 1, "pick_place");
  generate_dataset(b.string(), 3, 60, 2, "pick_place");
  const auto ra = read_manifest(a.string()), rb = read_manifest(b.string());
  REQUIRE(ra.size() == rb.size());
  CHECK(ra.size() == 6);
  CHECK(read_file_bytes((a / ra[0].path).string()) != read_file_bytes((b / rb[0].path).string()));
  fs::remove_all(b);
  generate_dataset(b.string(), 3, 60, 1, "pick_place");
  for (std::size_t i = 0; i < ra.size(); ++i)
    CHECK(read_file_bytes((a / ra[i].path).string()) == read_file_bytes((b / ra[i].path).string()));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("expert stand-in succeeds everywhere") {
  const ExpertPolicy expert(6);
  for (SplitName s : {SplitName::in_domain, SplitName::novel_objects, SplitName::new_skills}) {
    const Evaluation ev = evaluate(expert, make_split(s), 10, 3, options());
    CHECK(ev.table.average.rate() == 1.0);
    for (const auto& r : ev.table.rows) CHECK(r.rate() == 1.0);
    for (const auto& t : ev.trials) {
      CHECK(t.imagined.size() == static_cast<std::size_t>(t.replans));
      CHECK(t.error.empty());
    }
  }
}

TEST_CASE("random policy rarely succeeds at pick_place") {
  const RandomPolicy random(6);
  const Evaluation ev = evaluate(random, make_split(SplitName::in_domain, "pick_place"), 100, 4, options());
  CHECK(ev.table.average.trials == 200);
  CHECK(ev.table.average.rate() <= 0.05);
  for (const auto& t : ev.trials) CHECK(t.imagined.empty());
}

TEST_CASE("zero replans fail immediately") {
  const ExpertPolicy expert(6);
  const auto trials = make_trials(make_split(SplitName::in_domain), 1, 5);
  const TrialResult r = run_trial(expert, trials.front(), options(3, 0));
  CHECK_FALSE(r.success);
  CHECK(r.replans == 0);
  CHECK(r.imagined.empty());
  CHECK(r.executed.frames.size() == 1);
  const Evaluation ev = evaluate(expert, make_split(SplitName::in_domain), 2, 5, options(3, 0));
  for (const auto& row : ev.table.rows) CHECK(row.rate() == 0.0);
}

TEST_CASE("exactly m simulator steps separate consecutive predictions") {
  const ExpertPolicy expert(6);
  for (int m : {1, 2, 3, 6}) {
    const auto trials = make_trials(make_split(SplitName::in_domain), 3, 6);
    for (const auto& r : run_trials(expert, trials, options(m))) {
      for (std::size_t k = 1; k < r.replan_frames.size(); ++k)
        CHECK(r.replan_frames[k] - r.replan_frames[k - 1] == kFramesPerStep * m);
      CHECK(r.executed.actions.size() <= static_cast<std::size_t>(m * r.replans));
    }
  }
  CHECK_THROWS_AS(run_trials(expert, make_trials(make_split(SplitName::in_domain), 1, 1), options(7)), UsageError);
  CHECK_THROWS_AS(run_trials(expert, make_trials(make_split(SplitName::in_domain), 1, 1), options(0)), UsageError);
}

TEST_CASE("evaluation is deterministic and independent of batching and workers") {
  const RandomPolicy random(6);
  const SplitSpec split = make_split(SplitName::in_domain);
  RolloutOptions a = options(), b = options();
  b.jobs = 3;
  const Evaluation x = evaluate(random, split, 4, 9, a), y = evaluate(random, split, 4, 9, b);
  CHECK(x.table.to_csv() == y.table.to_csv());
  for (std::size_t i = 0; i < x.trials.size(); ++i) CHECK(x.trials[i].executed == y.trials[i].executed);
  RolloutOptions c = options();
  c.batch = 5;
  const Evaluation z = evaluate(random, split, 4, 9, c);
  for (std::size_t i = 0; i < x.trials.size(); ++i) CHECK(x.trials[i].executed == z.trials[i].executed);
}

TEST_CASE("success table aggregates by trial count") {
  const RandomPolicy random(6);
  const Evaluation ev = evaluate(random, make_split(SplitName::in_domain), 5, 2, options());
  int trials = 0, successes = 0;
  for (const auto& r : ev.table.rows) {
    trials += r.trials;
    successes += r.successes;
  }
  CHECK(ev.table.average.trials == trials);
  CHECK(ev.table.average.successes == successes);
  const std::string csv = ev.table.to_csv();
  CHECK(csv.rfind("split,task,embodiment,trials,successes,rate\n", 0) == 0);
  CHECK(csv.find("in_domain,average,all,40,") != std::string::npos);
  CHECK_THROWS_AS(make_trials(SplitSpec{}, 5, 1), UsageError);
}

TEST_CASE("model policy plans finite chunks and imagines every replan") {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_blocks = 1;
  cfg.vocab_size = Vocab::standard().size();
  ParamStore<float> p = init_params(cfg, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<float> n(0.f, 0.05f);
  for (auto& [name, t] : p)
    for (Index i = 0; i < t.size(); ++i) t[i] += n(rng);
  const ModelPolicy policy(p, cfg, DiffusionConfig{}, 5, InferMode::joint);
  RolloutOptions o = options(3, 3);
  const Evaluation ev = evaluate(policy, make_split(SplitName::in_domain, "pick_place"), 2, 1, o);
  for (const auto& t : ev.trials) {
    CHECK(t.imagined.size() == static_cast<std::size_t>(t.replans));
    for (const auto& lat : t.imagined) {
      CHECK(lat.shape() == std::vector<Index>{4, 8, 8, 192});
      CHECK(lat.all_finite());
      CHECK(lat.matrix().minCoeff() >= 0.f);
      CHECK(lat.matrix().maxCoeff() <= 1.f);
    }
    for (const Action& a : t.executed.actions) {
      for (int k = 0; k < 6; ++k) CHECK(std::isfinite(a[static_cast<std::size_t>(k)]));
      CHECK(a[6] >= 0.f);
      CHECK(a[6] <= 1.f);
    }
  }
  const Evaluation again = evaluate(policy, make_split(SplitName::in_domain, "pick_place"), 2, 1, o);
  CHECK(again.table.to_csv() == ev.table.to_csv());
  for (std::size_t i = 0; i < ev.trials.size(); ++i) CHECK(again.trials[i].imagined == ev.trials[i].imagined);

  const ModelPolicy staged(p, cfg, DiffusionConfig{}, 5, InferMode::two_stage);
  const Evaluation s = evaluate(staged, make_split(SplitName::in_domain, "pick_place"), 1, 1, o);
  CHECK(s.trials.size() == 2);
}

TEST_CASE("trial archives round trip") {
  const ExpertPolicy expert(6);
  const Evaluation ev = evaluate(expert, make_split(SplitName::in_domain, "stack"), 2, 8, options());
  const fs::path dir = fs::temp_directory_path() / "vvla_archive";
  fs::remove_all(dir);
  write_archive(dir.string(), ev);
  const auto back = read_archive(dir.string());
  REQUIRE(back.size() == ev.trials.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].success == ev.trials[i].success);
    CHECK(back[i].executed == ev.trials[i].executed);
    CHECK(back[i].imagined == ev.trials[i].imagined);
    CHECK(back[i].replan_frames == ev.trials[i].replan_frames);
    CHECK(back[i].spec.seed == ev.trials[i].spec.seed);
    CHECK(back[i].spec.cell == ev.trials[i].spec.cell);
  }
  CHECK(read_file_bytes((dir / "success.csv").string()).size() > 0);
  fs::remove_all(dir);

  const LatentClip lat = ev.trials[0].imagined[0];
  CHECK(decode_latents(encode_latents(lat)) == lat);
  auto bytes = encode_latents(lat);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_latents(bytes), DataError);
}
