#include <cmath>

#include "doctest.h"
#include "pararec/decoder.hpp"
#include "pararec/gradcheck.hpp"

using namespace pararec;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, real lo = -1, real hi = 1) {
  Tensor t(std::move(shape));
  fill_uniform(t, lo, hi, rng);
  return t;
}

real weighted_sum(const Tensor& t, const Tensor& w) {
  real s = 0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * w[i];
  return s;
}

real sigmoid(real x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("lstm with zero weights gives zero hidden states") {
  LstmParams params(3, 4);
  LstmLineRunner runner;
  Rng rng(1);
  Tensor x = random_tensor({6, 3}, rng);
  const Tensor& h = runner.forward(x, LstmState::zero(4), params);
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == 0);
}

TEST_CASE("single lstm step matches the gate-equation oracle") {
  Rng rng(2);
  LstmParams params(3, 2);
  params.init(rng);
  fill_uniform(params.bias, -0.3, 0.3, rng);
  Tensor x = random_tensor({1, 3}, rng);
  LstmState init;
  init.h = {0.3, -0.2};
  init.c = {-0.5, 0.7};
  LstmLineRunner runner;
  const Tensor& h = runner.forward(x, init, params);

  for (int j = 0; j < 2; ++j) {
    auto gate_pre = [&](int gate) {
      real z = params.bias[static_cast<size_t>(gate * 2 + j)];
      for (int k = 0; k < 3; ++k)
        z += params.w_input.at(gate * 2 + j, k) * x.at(0, k);
      for (int k = 0; k < 2; ++k)
        z += params.w_hidden.at(gate * 2 + j, k) * init.h[static_cast<size_t>(k)];
      return z;
    };
    const real gi = sigmoid(gate_pre(0));
    const real gf = sigmoid(gate_pre(1));
    const real gg = std::tanh(gate_pre(2));
    const real go = sigmoid(gate_pre(3));
    const real c = gf * init.c[static_cast<size_t>(j)] + gi * gg;
    const real expect = go * std::tanh(c);
    CHECK(h.at(0, j) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("carried state equals the previous line's final state") {
  Rng rng(3);
  LstmParams params(3, 4);
  params.init(rng);
  Tensor line1 = random_tensor({5, 3}, rng);
  Tensor line2 = random_tensor({4, 3}, rng);

  LstmLineRunner first;
  first.forward(line1, LstmState::zero(4), params);
  const LstmState carried = first.final_state();
  for (int j = 0; j < 4; ++j)
    CHECK(carried.h[static_cast<size_t>(j)] == first.hidden_seq().at(4, j));

  // Decoding line2 from the carried state differs from a zero start.
  LstmLineRunner carried_run, fresh_run;
  const Tensor& with_carry = carried_run.forward(line2, carried, params);
  const Tensor& from_zero = fresh_run.forward(line2, LstmState::zero(4), params);
  bool differ = false;
  for (std::size_t i = 0; i < with_carry.size(); ++i)
    if (with_carry[i] != from_zero[i]) differ = true;
  CHECK(differ);
}

TEST_CASE("causality: line one's output ignores line two") {
  Rng rng(4);
  LstmParams params(2, 3);
  params.init(rng);
  Tensor line1 = random_tensor({4, 2}, rng);
  LstmLineRunner a;
  const Tensor ha = a.forward(line1, LstmState::zero(3), params);
  // Whatever is decoded later cannot change the already-produced sequence.
  LstmLineRunner b;
  const Tensor hb = b.forward(line1, LstmState::zero(3), params);
  for (std::size_t i = 0; i < ha.size(); ++i) CHECK(ha[i] == hb[i]);
}

TEST_CASE("lstm gradcheck through all four gates and the carry") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    LstmParams params(3, 4);
    params.init(rng);
    fill_uniform(params.bias, -0.2, 0.2, rng);
    Tensor line1 = random_tensor({3, 3}, rng);
    Tensor line2 = random_tensor({4, 3}, rng);
    Tensor w1 = random_tensor({3, 4}, rng, 0.5, 1.5);
    Tensor w2 = random_tensor({4, 4}, rng, 0.5, 1.5);

    ParamSet ps;
    params.collect_params(ps, "lstm");
    Tensor gx1(line1.shape()), gx2(line2.shape());
    ps.add("line1", line1, gx1);
    ps.add("line2", line2, gx2);

    // Two lines with carried state exercise the cross-line path.
    auto loss = [&]() {
      LstmLineRunner r1, r2;
      const Tensor& h1 = r1.forward(line1, LstmState::zero(4), params);
      const Tensor& h2 = r2.forward(line2, r1.final_state(), params);
      return weighted_sum(h1, w1) + weighted_sum(h2, w2);
    };
    LstmLineRunner r1, r2;
    auto grads = [&]() {
      ps.zero_grads();
      r1.forward(line1, LstmState::zero(4), params);
      r2.forward(line2, r1.final_state(), params);
      LstmInputGrads g2 = r2.backward(w2, LstmState::zero(4), params);
      LstmInputGrads g1 = r1.backward(w1, g2.grad_init, params);
      gx1 = g1.grad_input;
      gx2 = g2.grad_input;
    };
    CHECK(all_pass(check_gradients(ps, loss, grads, {})));
  }
}

TEST_CASE("projection with zero weights gives uniform rows") {
  ClassProjection proj(4, 5);
  Rng rng(6);
  Tensor hidden = random_tensor({3, 4}, rng);
  const Tensor probs = prob_matrix_from_logits(proj.forward(hidden));
  for (int t = 0; t < 3; ++t)
    for (int k = 0; k < 5; ++k)
      CHECK(probs.at(t, k) == doctest::Approx(0.2));
}

TEST_CASE("prob matrix rows sum to one") {
  Rng rng(7);
  ClassProjection proj(4, 6);
  proj.init(rng);
  Tensor hidden = random_tensor({8, 4}, rng, -2, 2);
  const Tensor probs = prob_matrix_from_logits(proj.forward(hidden));
  for (int t = 0; t < 8; ++t) {
    real sum = 0;
    for (int k = 0; k < 6; ++k) {
      CHECK(probs.at(t, k) >= 0);
      sum += probs.at(t, k);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("projection matches matmul+softmax composition") {
  Rng rng(8);
  ClassProjection proj(3, 4);
  proj.init(rng);
  fill_uniform(proj.bias, -0.5, 0.5, rng);
  Tensor hidden = random_tensor({2, 3}, rng);
  const Tensor probs = prob_matrix_from_logits(proj.forward(hidden));
  for (int t = 0; t < 2; ++t) {
    real denom = 0;
    std::vector<real> logits(4);
    for (int k = 0; k < 4; ++k) {
      real z = proj.bias[static_cast<size_t>(k)];
      for (int j = 0; j < 3; ++j) z += proj.weight.at(k, j) * hidden.at(t, j);
      logits[static_cast<size_t>(k)] = z;
    }
    for (int k = 0; k < 4; ++k) denom += std::exp(logits[static_cast<size_t>(k)]);
    for (int k = 0; k < 4; ++k)
      CHECK(probs.at(t, k) ==
            doctest::Approx(std::exp(logits[static_cast<size_t>(k)]) / denom)
                .epsilon(1e-12));
  }
}

TEST_CASE("projection gradcheck") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    ClassProjection proj(3, 4);
    proj.init(rng);
    Tensor hidden = random_tensor({5, 3}, rng);
    Tensor weights = random_tensor({5, 4}, rng, 0.5, 1.5);
    ParamSet ps;
    proj.collect_params(ps, "proj");
    Tensor gh(hidden.shape());
    ps.add("hidden", hidden, gh);
    auto loss = [&]() { return weighted_sum(proj.forward(hidden), weights); };
    auto grads = [&]() {
      ps.zero_grads();
      proj.forward(hidden);
      gh = proj.backward(weights, hidden);
    };
    CHECK(all_pass(check_gradients(ps, loss, grads, {})));
  }
}
