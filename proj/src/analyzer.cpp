#include "vvla/analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "vvla/errors.hpp"
#include "vvla/seeding.hpp"

namespace vvla {

namespace {

float pixel_center(int i) { return (static_cast<float>(i) + 0.5f) * kPixel; }

bool near_color(const Frame& f, int r, int c, const Rgb& col) {
  return std::abs(f.at(r, c, 0) - col.r) <= kDetectTolerance && std::abs(f.at(r, c, 1) - col.g) <= kDetectTolerance &&
         std::abs(f.at(r, c, 2) - col.b) <= kDetectTolerance;
}

}  // namespace

std::vector<Detection> detect_keypoints(const Frame& frame, const ScenePalette& palette) {
  std::vector<Detection> out;
  out.reserve(palette.size());
  for (const auto& [id, col] : palette) {
    Detection d;
    d.id = id;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int r = 0; r < kFrameSize; ++r)
      for (int c = 0; c < kFrameSize; ++c)
        if (near_color(frame, r, c, col)) {
          const double x = pixel_center(c), y = pixel_center(r);
          sx += x, sy += y, sxx += x * x, syy += y * y, sxy += x * y;
          ++d.pixels;
        }
    if (d.pixels > 0) {
      const double n = d.pixels;
      d.valid = true;
      d.x = static_cast<float>(sx / n);
      d.y = static_cast<float>(sy / n);
      const double cxx = sxx / n - (sx / n) * (sx / n), cyy = syy / n - (sy / n) * (sy / n);
      const double cxy = sxy / n - (sx / n) * (sy / n);
      const double tr = cxx + cyy, disc = std::sqrt(std::max(0.0, 0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy));
      const double hi = 0.5 * tr + disc, lo = 0.5 * tr - disc;
      d.elongation = lo > 1e-12 ? static_cast<float>(hi / lo) : (hi > 1e-12 ? std::numeric_limits<float>::infinity() : 1.f);
    }
    out.push_back(d);
  }
  return out;
}

int Trajectory::valid_count() const { return static_cast<int>(std::count(valid.begin(), valid.end(), 1)); }

TrajectorySet track(const std::vector<Frame>& frames, const ScenePalette& palette, int segment) {
  TrajectorySet set(palette.size());
  for (std::size_t i = 0; i < palette.size(); ++i) set[i].id = palette[i].first;
  for (const Frame& f : frames) {
    const auto dets = detect_keypoints(f, palette);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      Trajectory& t = set[i];
      t.x.push_back(dets[i].x);
      t.y.push_back(dets[i].y);
      t.valid.push_back(dets[i].valid ? 1 : 0);
      t.segment.push_back(segment);
    }
  }
  return set;
}

void append_frames(TrajectorySet& base, const TrajectorySet& more) {
  if (base.empty()) {
    base = more;
    return;
  }
  if (base.size() != more.size()) throw DataError("trajectory sets disagree on keypoints");
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (base[i].id != more[i].id) throw DataError("trajectory sets disagree on keypoint ids");
    auto cat = [](auto& a, const auto& b) { a.insert(a.end(), b.begin(), b.end()); };
    cat(base[i].x, more[i].x);
    cat(base[i].y, more[i].y);
    cat(base[i].valid, more[i].valid);
    cat(base[i].segment, more[i].segment);
  }
}

// ---------------------------------------------------------------- matching

Assignment hungarian(const MatrixD& cost) {
  Assignment out;
  const Index rows = cost.rows(), cols = cost.cols();
  if (rows == 0 || cols == 0) return out;
  if (!cost.allFinite()) throw DataError("assignment costs must be finite");
  const bool flip = rows > cols;
  const MatrixD a = flip ? MatrixD(cost.transpose()) : cost;
  const Index n = a.rows(), m = a.cols();

  // Shortest augmenting paths with row and column potentials, 1-based.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1)), v(static_cast<std::size_t>(m + 1));
  std::vector<Index> p(static_cast<std::size_t>(m + 1)), way(static_cast<std::size_t>(m + 1));
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(m + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        if (used[uj]) continue;
        const double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[uj];
        if (cur < minv[uj]) {
          minv[uj] = cur;
          way[uj] = j0;
        }
        if (minv[uj] < delta) {
          delta = minv[uj];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        if (used[uj]) {
          u[static_cast<std::size_t>(p[uj])] += delta;
          v[uj] -= delta;
        } else {
          minv[uj] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  for (Index j = 1; j <= m; ++j) {
    const Index i = p[static_cast<std::size_t>(j)];
    if (i == 0) continue;
    const int r = static_cast<int>(i - 1), c = static_cast<int>(j - 1);
    out.pairs.emplace_back(flip ? c : r, flip ? r : c);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  for (const auto& [r, c] : out.pairs) out.cost += cost(r, c);
  return out;
}

// ---------------------------------------------------------------- similarity

namespace {

bool joint_valid(const Trajectory& a, const Trajectory& b, std::size_t t) { return a.valid[t] && b.valid[t]; }

double mean_distance(const Trajectory& a, const Trajectory& b) {
  double sum = 0;
  int n = 0;
  for (std::size_t t = 0; t < a.frames(); ++t)
    if (joint_valid(a, b, t)) {
      sum += std::hypot(a.x[t] - b.x[t], a.y[t] - b.y[t]);
      ++n;
    }
  return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

// Concatenated displacements over frames where both trajectories are valid
// at t - 1 and t within one segment.
std::pair<std::vector<double>, std::vector<double>> displacements(const Trajectory& a, const Trajectory& b) {
  std::vector<double> da, db;
  for (std::size_t t = 1; t < a.frames(); ++t) {
    if (a.segment[t] != a.segment[t - 1] || !joint_valid(a, b, t) || !joint_valid(a, b, t - 1)) continue;
    da.push_back(a.x[t] - a.x[t - 1]);
    da.push_back(a.y[t] - a.y[t - 1]);
    db.push_back(b.x[t] - b.x[t - 1]);
    db.push_back(b.y[t] - b.y[t - 1]);
  }
  return {da, db};
}

double norm(const std::vector<double>& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

}  // namespace

SimilarityReport motion_similarity(const TrajectorySet& exec, const TrajectorySet& imag) {
  if (exec.empty() || imag.empty()) throw DataError("motion similarity needs two non-empty trajectory sets");
  std::vector<const Trajectory*> e, m;
  for (const auto& t : exec)
    if (t.valid_count() > 0) e.push_back(&t);
  for (const auto& t : imag)
    if (t.valid_count() > 0) m.push_back(&t);
  for (const auto* t : e)
    if (t->frames() != imag.front().frames() || t->segment != imag.front().segment)
      throw DataError("trajectory sets are not time-aligned");

  SimilarityReport rep;
  // Pairs without jointly valid frames get a cost above any real distance so
  // they are matched only when nothing else is left; they are dropped below.
  constexpr double kNoOverlap = 10.0;
  MatrixD cost(static_cast<Index>(e.size()), static_cast<Index>(m.size()));
  for (std::size_t i = 0; i < e.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double d = mean_distance(*e[i], *m[j]);
      cost(static_cast<Index>(i), static_cast<Index>(j)) = std::isnan(d) ? kNoOverlap : d;
    }
  const Assignment asg = hungarian(cost);

  double sum = 0;
  int counted = 0;
  for (const auto& [i, j] : asg.pairs) {
    const Trajectory& a = *e[static_cast<std::size_t>(i)];
    const Trajectory& b = *m[static_cast<std::size_t>(j)];
    if (std::isnan(mean_distance(a, b))) continue;
    const auto [da, db] = displacements(a, b);
    const double na = norm(da), nb = norm(db);
    double c;
    const bool sa = na < kStaticMotion, sb = nb < kStaticMotion;
    if (sa && sb) {
      c = std::numeric_limits<double>::quiet_NaN();
    } else if (sa || sb) {
      c = 0;
    } else {
      c = std::inner_product(da.begin(), da.end(), db.begin(), 0.0) / (na * nb);
      c = std::clamp(c, -1.0, 1.0);
    }
    rep.pairs.emplace_back(a.id, b.id);
    rep.cosines.push_back(c);
    if (!std::isnan(c)) {
      sum += c;
      ++counted;
    }
  }
  rep.matched = static_cast<int>(rep.pairs.size());
  if (rep.matched == 0) throw DataError("no trajectory pairs could be matched");
  rep.unmatched_exec = static_cast<int>(exec.size()) - rep.matched;
  rep.unmatched_imag = static_cast<int>(imag.size()) - rep.matched;
  // Agreement on a scene where nothing moves is perfect agreement.
  rep.mean = counted ? sum / counted : 1.0;
  return rep;
}

// ---------------------------------------------------------------- judging

namespace {

constexpr float kToppledElongation = 2.5f;

constexpr float kVisibleFraction = 0.8f;

bool stain_visible(const Frame& f, const StainSpec& st, int cell) {
  const Rgb sc = stain_rgb();
  for (int r = 0; r < kFrameSize; ++r) {
    if (std::abs(pixel_center(r) - st.y) > kStainHalfHeight) continue;
    for (int c = 0; c < kFrameSize; ++c)
      if (static_cast<int>(std::floor((pixel_center(c) - st.x0) / st.cell)) == cell && near_color(f, r, c, sc))
        return true;
  }
  return false;
}

}  // namespace

bool judge_frames(const std::vector<Frame>& frames, const TaskSpec& task, const ScenePalette& palette) {
  if (frames.empty()) return false;
  const std::size_t n = task.objects.size();
  std::vector<std::vector<Detection>> dets;
  for (const Frame& f : frames) dets.push_back(detect_keypoints(f, palette));
  std::vector<int> most(n, 0);
  for (const auto& frame : dets)
    for (const Detection& d : frame)
      if (d.id >= 0 && static_cast<std::size_t>(d.id) < n) most[static_cast<std::size_t>(d.id)] = std::max(most[static_cast<std::size_t>(d.id)], d.pixels);

  // Latest detection of each object; the target is read from the latest
  // frame where it is nearly unoccluded since the subject ends up over it.
  WorldState s;
  s.objects.resize(n);
  std::vector<bool> seen(n, false);
  for (const auto& frame : dets)
    for (const Detection& d : frame) {
      if (!d.valid || d.id < 0 || static_cast<std::size_t>(d.id) >= n) continue;
      const auto k = static_cast<std::size_t>(d.id);
      if (d.id == task.target && static_cast<float>(d.pixels) < kVisibleFraction * static_cast<float>(most[k])) continue;
      auto& o = s.objects[k];
      o.x = d.x;
      o.y = d.y;
      if (task.object(d.id).shape == Shape::bottle) o.upright = d.elongation < kToppledElongation;
      seen[k] = true;
    }
  auto required = [&](int id) { return seen[static_cast<std::size_t>(id)]; };
  if (!required(task.subject)) return false;
  if (task.target >= 0 && !required(task.target)) return false;

  // Height is invisible from above: a subject resting within the stacking
  // tolerance of its target must be on top of it.
  if (task.skill == Skill::stack) s.objects[static_cast<std::size_t>(task.subject)].layer = 1;

  // Only the sponge and gripper can cover the strip, and only where it has
  // been wiped, so a cell is clean unless stain shows in the final frame.
  if (task.stain) {
    const StainSpec& st = *task.stain;
    s.swept.assign(static_cast<std::size_t>(st.cells), 1);
    for (int k = 0; k < st.cells; ++k)
      if (stain_visible(frames.back(), st, k)) s.swept[static_cast<std::size_t>(k)] = 0;
  }
  return check_success(s, task);
}

bool judge_imagination(const LatentClip& imagined, const TaskSpec& task, const ScenePalette& palette, int patch) {
  const Clip clip = decode(imagined, patch, kFrameChannels);
  std::vector<Frame> frames;
  for (Index i = 0; i < clip.shape()[0]; ++i) frames.push_back(frame_at(clip, i));
  return judge_frames(frames, task, palette);
}

// ---------------------------------------------------------------- correlation

CorrelationReport correlate(const std::vector<std::pair<double, bool>>& results) {
  CorrelationReport rep;
  std::vector<double> pos, neg;
  for (const auto& [s, ok] : results) (ok ? pos : neg).push_back(s);
  rep.successes = static_cast<int>(pos.size());
  rep.failures = static_cast<int>(neg.size());
  if (pos.size() < 2 || neg.size() < 2)
    throw DataError("correlation needs at least two successes and two failures (got " + std::to_string(pos.size()) +
                    " and " + std::to_string(neg.size()) + ")");
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); };
  rep.mean_success = mean(pos);
  rep.mean_failure = mean(neg);
  rep.difference = rep.mean_success - rep.mean_failure;

  const double n = static_cast<double>(results.size());
  double all = 0, all2 = 0;
  for (const auto& r : results) all += r.first, all2 += r.first * r.first;
  const double sd = std::sqrt(std::max(0.0, all2 / n - (all / n) * (all / n)));
  const double p = pos.size() / n;
  rep.point_biserial = sd > 0 ? rep.difference / sd * std::sqrt(p * (1 - p)) : 0.0;

  double wins = 0;
  for (double a : pos)
    for (double b : neg) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  rep.auroc = wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
  return rep;
}

// ---------------------------------------------------------------- archives

TrialAnalysis analyze_trial(const ArchivedTrial& trial, int patch) {
  TrialAnalysis out;
  out.id = trial.id;
  out.task = skill_name(trial.spec.cell.skill);
  out.split = to_string(trial.spec.split);
  out.execution_success = trial.success;
  if (trial.replan_frames.empty()) throw DataError("trial " + trial.id + " has no recorded replans");
  if (trial.imagined.size() != trial.replan_frames.size())
    throw DataError("trial " + trial.id + " has " + std::to_string(trial.imagined.size()) + " imagined clips for " +
                    std::to_string(trial.replan_frames.size()) + " replans");

  const Simulator sim(trial.spec.task, EmbodimentSpec::from_id(trial.spec.cell.embodiment));
  const ScenePalette palette = sim.palette();
  const auto& executed = trial.executed.frames;
  TrajectorySet exec, imag;
  for (std::size_t k = 0; k < trial.replan_frames.size(); ++k) {
    const int f0 = trial.replan_frames[k];
    const int f1 = k + 1 < trial.replan_frames.size() ? trial.replan_frames[k + 1]
                                                       : static_cast<int>(executed.size()) - 1;
    if (f0 < 0 || f1 < f0 || f1 >= static_cast<int>(executed.size()))
      throw DataError("trial " + trial.id + " has inconsistent replan frames");
    const Clip clip = decode(trial.imagined[k], patch, kFrameChannels);
    std::vector<Frame> imagined;
    for (Index i = 0; i < clip.shape()[0]; ++i) imagined.push_back(frame_at(clip, i));
    if (judge_frames(imagined, trial.spec.task, palette)) out.imagination_success = true;

    const int len = std::min<int>(f1 - f0 + 1, static_cast<int>(imagined.size()));
    imagined.resize(static_cast<std::size_t>(len));
    const std::vector<Frame> window(executed.begin() + f0, executed.begin() + f0 + len);
    append_frames(exec, track(window, palette, static_cast<int>(k)));
    append_frames(imag, track(imagined, palette, static_cast<int>(k)));
  }
  try {
    out.similarity = motion_similarity(exec, imag).mean;
  } catch (const DataError&) {
    out.similarity.reset();
  }
  return out;
}

Analysis analyze(const std::vector<ArchivedTrial>& trials, int patch) {
  Analysis a;
  std::vector<std::pair<double, bool>> points;
  for (const auto& t : trials) {
    a.trials.push_back(analyze_trial(t, patch));
    const auto& r = a.trials.back();
    if (r.similarity) points.emplace_back(*r.similarity, r.execution_success);
  }
  try {
    a.correlation = correlate(points);
  } catch (const DataError& e) {
    a.correlation_error = e.what();
  }
  return a;
}

std::string Analysis::to_csv() const {
  std::string out = "trial_id,task,split,similarity,execution_success,imagination_success\n";
  char buf[256];
  for (const auto& t : trials) {
    std::string sim = "";
    if (t.similarity) {
      std::snprintf(buf, sizeof buf, "%.9g", *t.similarity);
      sim = buf;
    }
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%s,%d,%d\n", t.id.c_str(), t.task.c_str(), t.split.c_str(), sim.c_str(),
                  t.execution_success ? 1 : 0, t.imagination_success ? 1 : 0);
    out += buf;
  }
  return out;
}

std::string Analysis::to_svg() const {
  constexpr double W = 560, H = 260, left = 60, right = 20, top = 30;
  const double span = W - left - right;
  auto sx = [&](double s) { return left + (std::clamp(s, -1.0, 1.0) + 1.0) / 2.0 * span; };
  const double y_ok = top + 50, y_fail = top + 150;
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                "font-size=\"12\">\n<rect width=\"100%%\" height=\"100%%\" fill=\"white\"/>\n",
                W, H);
  out += buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", left,
                H - 40, W - right, H - 40);
  out += buf;
  for (double tick : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.1f</text>\n",
                  sx(tick), H - 40, sx(tick), H - 35, sx(tick), H - 22, tick);
    out += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">motion similarity</text>\n"
                "<text x=\"10\" y=\"%.1f\">success</text><text x=\"10\" y=\"%.1f\">failure</text>\n",
                left + span / 2, H - 6, y_ok + 4, y_fail + 4);
  out += buf;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    if (!t.similarity) continue;
    const double jitter = static_cast<double>(splitmix64(i) % 1000) / 1000.0 * 50.0 - 25.0;
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" fill-opacity=\"0.5\"/>\n",
                  sx(*t.similarity), (t.execution_success ? y_ok : y_fail) + jitter,
                  t.execution_success ? "#1f77b4" : "#d62728");
    out += buf;
  }
  if (correlation) {
    for (const auto& [m, y, col] : {std::tuple{correlation->mean_success, y_ok, "#1f77b4"},
                                    std::tuple{correlation->mean_failure, y_fail, "#d62728"}}) {
      std::snprintf(buf, sizeof buf,
                    "<line x1=\"%.2f\" y1=\"%.1f\" x2=\"%.2f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"3\"/>\n", sx(m),
                    y - 32, sx(m), y + 32, col);
      out += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"18\">mean success %.3f, mean failure %.3f, AUROC %.3f</text>\n", left,
                  correlation->mean_success, correlation->mean_failure, correlation->auroc);
    out += buf;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace vvla
