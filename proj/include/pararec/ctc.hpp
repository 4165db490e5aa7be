#pragma once

#include <vector>

#include "pararec/tensor.hpp"

namespace pararec {

// Outcome of a CTC loss evaluation. `feasible` is false when the target
// cannot be aligned within T frames (|target| plus adjacent repeats exceeds
// T); callers decide whether to skip or flag the sample.
struct CtcResult {
  bool feasible = false;
  real loss = 0;      // -ln sum over alignment paths
  Tensor logit_grad;  // [T,N+1] w.r.t. pre-softmax logits (fused form)
};

// Minimum number of frames an alignment of `target` needs.
int ctc_min_frames(const std::vector<int>& target);

// probs: [T,N+1] with rows summing to 1; blank is the last class (index N).
// Labels in `target` must lie in [0,N-1]. The gradient is taken w.r.t. the
// logits feeding the row softmax, the numerically stable fused form.
CtcResult ctc_loss(const Tensor& probs, const std::vector<int>& target);

// Per-frame argmax, collapse repeats, drop blanks.
std::vector<int> greedy_decode(const Tensor& probs);

}  // namespace pararec
