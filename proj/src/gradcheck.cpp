#include "vvla/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace vvla {

namespace {
constexpr double kZero = 1e-12;
}

GradReport check_gradients(const LossFn& loss_fn, const ParamStore<double>& params, int n_probe, double eps,
                           double rtol, std::uint64_t seed) {
  if (eps <= 0) throw UsageError("check_gradients: eps must be positive");
  for (const auto& [name, t] : params) {
    if (!t.all_finite()) throw NumericalError("non-finite parameter " + name);
  }
  ParamStore<double> grads;
  const double base = loss_fn(params, &grads);
  if (!std::isfinite(base)) throw NumericalError("non-finite loss at unperturbed parameters");

  const auto names = params.names();
  std::vector<Index> offsets;
  Index total = 0;
  for (const auto& n : names) {
    offsets.push_back(total);
    total += params.at(n).size();
  }
  if (total == 0) throw UsageError("check_gradients: no parameters");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, total - 1);
  ParamStore<double> probe = params;
  GradReport report;
  for (int i = 0; i < n_probe; ++i) {
    const Index flat = pick(rng);
    const auto k = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1);
    const std::string& name = names[k];
    const Index idx = flat - offsets[k];

    double& x = probe.at(name)[idx];
    const double saved = x;
    x = saved + eps;
    const double fp = loss_fn(probe, nullptr);
    x = saved - eps;
    const double fm = loss_fn(probe, nullptr);
    x = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericalError("non-finite loss when probing " + name);

    const double fd = (fp - fm) / (2 * eps);
    const double an = grads.contains(name) ? grads.at(name)[idx] : 0.0;
    ++report.probed;
    // Central differences cannot resolve gradients below their rounding
    // error, so both sides under that floor count as zero.
    const double floor =
        std::max(kZero, 4 * std::numeric_limits<double>::epsilon() * (std::abs(fp) + std::abs(fm)) / (2 * eps));
    if (std::abs(an) < floor && std::abs(fd) < floor) {
      ++report.excluded;
      continue;
    }
    const double rel = std::abs(an - fd) / std::max(std::abs(an), std::abs(fd));
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_param = name;
      report.worst_index = idx;
    }
  }
  report.pass = report.max_rel_err < rtol;
  return report;
}

}  // namespace vvla
