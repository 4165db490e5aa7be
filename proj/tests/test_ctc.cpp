#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "pararec/ctc.hpp"
#include "pararec/gradcheck.hpp"
#include "pararec/ops.hpp"

using namespace pararec;

namespace {

// Exhaustive CTC oracle: sum the probability of every length-T path whose
// collapse (merge repeats, drop blanks) equals the target.
std::vector<int> collapse_path(const std::vector<int>& path, int blank) {
  std::vector<int> out;
  int prev = blank;
  for (int p : path) {
    if (p != blank && p != prev) out.push_back(p);
    prev = p;
  }
  return out;
}

real brute_force_prob(const Tensor& probs, const std::vector<int>& target) {
  const int frames = probs.dim(0), classes = probs.dim(1);
  const int blank = classes - 1;
  real total = 0;
  std::vector<int> path(static_cast<size_t>(frames), 0);
  while (true) {
    if (collapse_path(path, blank) == target) {
      real p = 1;
      for (int t = 0; t < frames; ++t) p *= probs.at(t, path[static_cast<size_t>(t)]);
      total += p;
    }
    int t = frames - 1;
    while (t >= 0 && ++path[static_cast<size_t>(t)] == classes) {
      path[static_cast<size_t>(t)] = 0;
      --t;
    }
    if (t < 0) break;
  }
  return total;
}

Tensor random_prob_matrix(int frames, int classes, Rng& rng) {
  Tensor logits({frames, classes});
  fill_uniform(logits, -1.5, 1.5, rng);
  return softmax(logits, 1);
}

}  // namespace

TEST_CASE("uniform rows, target 'a': three valid paths out of nine") {
  // Paths aa, a-, -a each carry probability (1/3)^2.
  Tensor probs = Tensor::full({2, 3}, 1.0 / 3);
  const CtcResult r = ctc_loss(probs, {0});
  REQUIRE(r.feasible);
  CHECK(r.loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("probability-one target has zero loss") {
  Tensor probs({1, 3});
  probs.at(0, 0) = 1;
  const CtcResult r = ctc_loss(probs, {0});
  REQUIRE(r.feasible);
  CHECK(r.loss == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("repeat target needs a separating blank") {
  CHECK(ctc_min_frames({0, 0}) == 3);
  Tensor probs = Tensor::full({1, 3}, 1.0 / 3);
  CHECK_FALSE(ctc_loss(probs, {0, 0}).feasible);
  Tensor probs2 = Tensor::full({2, 3}, 1.0 / 3);
  CHECK_FALSE(ctc_loss(probs2, {0, 0}).feasible);
  Tensor probs3 = Tensor::full({3, 3}, 1.0 / 3);
  CHECK(ctc_loss(probs3, {0, 0}).feasible);
}

TEST_CASE("label outside the class range is rejected") {
  Tensor probs = Tensor::full({2, 3}, 1.0 / 3);
  CHECK_THROWS_AS(ctc_loss(probs, {2}), std::invalid_argument);  // blank id
  CHECK_THROWS_AS(ctc_loss(probs, {-1}), std::invalid_argument);
}

TEST_CASE("forward-backward equals brute force on small instances") {
  Rng rng(11);
  int checked = 0;
  for (int frames = 1; frames <= 6; ++frames) {
    for (int letters = 1; letters <= 3; ++letters) {
      const int classes = letters + 1;
      for (int len = 0; len <= 3; ++len) {
        // A few random targets per size.
        for (int trial = 0; trial < 3; ++trial) {
          std::vector<int> target;
          std::uniform_int_distribution<int> pick(0, letters - 1);
          for (int i = 0; i < len; ++i) target.push_back(pick(rng));
          const Tensor probs = random_prob_matrix(frames, classes, rng);
          const CtcResult r = ctc_loss(probs, target);
          const real brute = brute_force_prob(probs, target);
          if (ctc_min_frames(target) > frames) {
            CHECK_FALSE(r.feasible);
            CHECK(brute == doctest::Approx(0.0));
          } else {
            REQUIRE(r.feasible);
            CHECK(r.loss == doctest::Approx(-std::log(brute)).epsilon(1e-9));
            ++checked;
          }
        }
      }
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("gradient w.r.t. logits matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor logits({5, 4});
    fill_uniform(logits, -1, 1, rng);
    const std::vector<int> target = {0, 2, 1};

    Tensor glogits(logits.shape());
    ParamSet ps;
    ps.add("logits", logits, glogits);
    auto loss = [&]() {
      return ctc_loss(softmax(logits, 1), target).loss;
    };
    auto grads = [&]() {
      ps.zero_grads();
      glogits = ctc_loss(softmax(logits, 1), target).logit_grad;
    };
    CHECK(all_pass(check_gradients(ps, loss, grads, {})));
  }
}

TEST_CASE("loss is non-negative, zero only for the certain labelling") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor probs = random_prob_matrix(4, 3, rng);
    const CtcResult r = ctc_loss(probs, {0, 1});
    REQUIRE(r.feasible);
    CHECK(r.loss > 0);
  }
}

TEST_CASE("log-space stability down to 1e-30 row mass") {
  Tensor probs({3, 3});
  for (int t = 0; t < 3; ++t) {
    probs.at(t, 0) = 1e-30;
    probs.at(t, 1) = 1e-30;
    probs.at(t, 2) = 1.0 - 2e-30;
  }
  const CtcResult r = ctc_loss(probs, {0});
  REQUIRE(r.feasible);
  CHECK(std::isfinite(r.loss));
  CHECK(r.logit_grad.all_finite());
}

TEST_CASE("greedy decode collapses repeats and drops blanks") {
  // argmax sequence a a blank b  ->  "ab"
  Tensor probs({4, 3});
  probs.at(0, 0) = 0.9;
  probs.at(1, 0) = 0.8;
  probs.at(2, 2) = 0.9;
  probs.at(3, 1) = 0.7;
  CHECK(greedy_decode(probs) == std::vector<int>{0, 1});

  Tensor blanks = Tensor::full({5, 3}, 0.0);
  for (int t = 0; t < 5; ++t) blanks.at(t, 2) = 1;
  CHECK(greedy_decode(blanks).empty());
}

TEST_CASE("greedy path is never better than the exhaustive best path") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor probs = random_prob_matrix(6, 4, rng);
    // Greedy path probability.
    real greedy_p = 1;
    for (int t = 0; t < 6; ++t) {
      real best = 0;
      for (int k = 0; k < 4; ++k) best = std::max(best, probs.at(t, k));
      greedy_p *= best;
    }
    // Exhaustive best path over all 4^6 paths.
    real best_p = 0;
    std::vector<int> path(6, 0);
    while (true) {
      real p = 1;
      for (int t = 0; t < 6; ++t) p *= probs.at(t, path[static_cast<size_t>(t)]);
      best_p = std::max(best_p, p);
      int t = 5;
      while (t >= 0 && ++path[static_cast<size_t>(t)] == 4) {
        path[static_cast<size_t>(t)] = 0;
        --t;
      }
      if (t < 0) break;
    }
    CHECK(greedy_p <= best_p + 1e-15);
  }
}
