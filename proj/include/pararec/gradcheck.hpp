#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pararec/param.hpp"

namespace pararec {

struct GradCheckEntry {
  std::string param;
  real max_rel_err = 0;
  std::size_t checked = 0;
  bool pass = true;
};

struct GradCheckOptions {
  real step = 1e-5;
  real tol = 1e-4;
  // Large tensors are probed on a deterministic random subset of entries.
  std::size_t max_probes_per_tensor = 400;
  std::uint64_t seed = 1;
};

// Central finite differences against analytic gradients.
// `compute_grads` must zero the registered grads and run a full
// forward+backward; `forward_loss` must rerun the identical forward pass and
// return the scalar loss. Both have to be deterministic functions of the
// current parameter values.
//
// Error measure: |fd - g| / max(|fd|, |g|, 1e-2), i.e. true relative error
// for gradients above 1e-2 and an absolute bound of tol*1e-2 below it.
std::vector<GradCheckEntry> check_gradients(
    ParamSet& params, const std::function<real()>& forward_loss,
    const std::function<void()>& compute_grads,
    const GradCheckOptions& opt = {});

bool all_pass(const std::vector<GradCheckEntry>& entries);

}  // namespace pararec
