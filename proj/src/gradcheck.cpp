#include "pararec/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pararec {

std::vector<GradCheckEntry> check_gradients(
    ParamSet& params, const std::function<real()>& forward_loss,
    const std::function<void()>& compute_grads, const GradCheckOptions& opt) {
  compute_grads();

  // Snapshot the analytic gradients before FD probing dirties caches.
  std::vector<std::vector<real>> analytic;
  analytic.reserve(params.items().size());
  for (const auto& p : params.items())
    analytic.emplace_back(p.grad->data(), p.grad->data() + p.grad->size());

  Rng rng(opt.seed);
  std::vector<GradCheckEntry> report;
  for (std::size_t pi = 0; pi < params.items().size(); ++pi) {
    const auto& p = params.items()[pi];
    GradCheckEntry entry;
    entry.param = p.name;

    std::vector<std::size_t> probes(p.value->size());
    std::iota(probes.begin(), probes.end(), std::size_t(0));
    if (probes.size() > opt.max_probes_per_tensor) {
      std::shuffle(probes.begin(), probes.end(), rng);
      probes.resize(opt.max_probes_per_tensor);
      std::sort(probes.begin(), probes.end());
    }

    for (std::size_t idx : probes) {
      const real saved = (*p.value)[idx];
      (*p.value)[idx] = saved + opt.step;
      const real lp = forward_loss();
      (*p.value)[idx] = saved - opt.step;
      const real lm = forward_loss();
      (*p.value)[idx] = saved;
      const real fd = (lp - lm) / (2 * opt.step);
      const real g = analytic[pi][idx];
      const real denom = std::max({std::fabs(fd), std::fabs(g), real(1e-2)});
      entry.max_rel_err = std::max(entry.max_rel_err, std::fabs(fd - g) / denom);
      ++entry.checked;
    }
    entry.pass = entry.max_rel_err < opt.tol;
    report.push_back(std::move(entry));
  }
  return report;
}

bool all_pass(const std::vector<GradCheckEntry>& entries) {
  for (const auto& e : entries)
    if (!e.pass) return false;
  return true;
}

}  // namespace pararec
