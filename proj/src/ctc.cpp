#include "pararec/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pararec {

namespace {

constexpr real kNegInf = -std::numeric_limits<real>::infinity();

real lse2(real a, real b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const real m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

int ctc_min_frames(const std::vector<int>& target) {
  int frames = static_cast<int>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++frames;
  return frames;
}

CtcResult ctc_loss(const Tensor& probs, const std::vector<int>& target) {
  if (probs.rank() != 2)
    throw std::invalid_argument("ctc_loss: probs must be [T,N+1], got " +
                                probs.shape_str());
  const int frames = probs.dim(0);
  const int classes = probs.dim(1);
  const int blank = classes - 1;
  for (int label : target)
    if (label < 0 || label >= blank)
      throw std::invalid_argument("ctc_loss: label " + std::to_string(label) +
                                  " outside [0," + std::to_string(blank - 1) +
                                  "]");

  CtcResult result;
  if (ctc_min_frames(target) > frames) {
    result.feasible = false;
    return result;
  }
  result.feasible = true;

  // Extended sequence: blanks interleaved, blank at both ends.
  const int ext_len = 2 * static_cast<int>(target.size()) + 1;
  auto ext_label = [&](int s) {
    return (s % 2 == 0) ? blank : target[static_cast<size_t>(s / 2)];
  };
  auto logp = [&](int t, int k) {
    const real p = probs.at(t, k);
    return p > 0 ? std::log(p) : kNegInf;
  };

  std::vector<real> alpha(static_cast<size_t>(frames) * ext_len, kNegInf);
  std::vector<real> beta(static_cast<size_t>(frames) * ext_len, kNegInf);
  auto a = [&](int t, int s) -> real& {
    return alpha[static_cast<size_t>(t) * ext_len + s];
  };
  auto b = [&](int t, int s) -> real& {
    return beta[static_cast<size_t>(t) * ext_len + s];
  };

  a(0, 0) = logp(0, blank);
  if (ext_len > 1) a(0, 1) = logp(0, ext_label(1));
  for (int t = 1; t < frames; ++t) {
    for (int s = 0; s < ext_len; ++s) {
      real best = a(t - 1, s);
      if (s >= 1) best = lse2(best, a(t - 1, s - 1));
      if (s >= 2 && ext_label(s) != blank && ext_label(s) != ext_label(s - 2))
        best = lse2(best, a(t - 1, s - 2));
      a(t, s) = best == kNegInf ? kNegInf : best + logp(t, ext_label(s));
    }
  }

  real total = a(frames - 1, ext_len - 1);
  if (ext_len > 1) total = lse2(total, a(frames - 1, ext_len - 2));
  result.loss = -total;
  result.logit_grad = Tensor({frames, classes});
  if (total == kNegInf) {
    // Probability-zero target: loss is +inf and there is no usable gradient.
    result.loss = std::numeric_limits<real>::infinity();
    return result;
  }

  b(frames - 1, ext_len - 1) = logp(frames - 1, ext_label(ext_len - 1));
  if (ext_len > 1)
    b(frames - 1, ext_len - 2) = logp(frames - 1, ext_label(ext_len - 2));
  for (int t = frames - 2; t >= 0; --t) {
    for (int s = ext_len - 1; s >= 0; --s) {
      real best = b(t + 1, s);
      if (s + 1 < ext_len) best = lse2(best, b(t + 1, s + 1));
      if (s + 2 < ext_len && ext_label(s) != blank &&
          ext_label(s) != ext_label(s + 2))
        best = lse2(best, b(t + 1, s + 2));
      b(t, s) = best == kNegInf ? kNegInf : best + logp(t, ext_label(s));
    }
  }

  // grad(logit[t,k]) = p(t,k) - sum over extended states with label k of the
  // path occupancy at (t,s). Alpha and beta both include the emission at t,
  // hence the single division by p(t, label).
  for (int t = 0; t < frames; ++t) {
    std::vector<real> occupancy(static_cast<size_t>(classes), real(0));
    for (int s = 0; s < ext_len; ++s) {
      const real as = a(t, s), bs = b(t, s);
      if (as == kNegInf || bs == kNegInf) continue;
      const int k = ext_label(s);
      occupancy[static_cast<size_t>(k)] +=
          std::exp(as + bs - logp(t, k) - total);
    }
    for (int k = 0; k < classes; ++k)
      result.logit_grad.at(t, k) =
          probs.at(t, k) - occupancy[static_cast<size_t>(k)];
  }
  return result;
}

std::vector<int> greedy_decode(const Tensor& probs) {
  if (probs.rank() != 2)
    throw std::invalid_argument("greedy_decode: probs must be [T,N+1]");
  const int frames = probs.dim(0);
  const int classes = probs.dim(1);
  const int blank = classes - 1;
  std::vector<int> out;
  int prev = blank;
  for (int t = 0; t < frames; ++t) {
    int best = 0;
    real bestp = probs.at(t, 0);
    for (int k = 1; k < classes; ++k) {
      if (probs.at(t, k) > bestp) {
        bestp = probs.at(t, k);
        best = k;
      }
    }
    if (best != blank && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

}  // namespace pararec
