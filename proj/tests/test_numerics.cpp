#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "pararec/gradcheck.hpp"
#include "pararec/ops.hpp"
#include "pararec/param.hpp"

using namespace pararec;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, real lo = -1, real hi = 1) {
  Tensor t(std::move(shape));
  fill_uniform(t, lo, hi, rng);
  return t;
}

// Fixed random weighting turns a tensor output into a scalar loss.
real weighted_sum(const Tensor& t, const Tensor& weights) {
  real s = 0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * weights[i];
  return s;
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  t.at(1, 2, 3) = 5;
  CHECK(t[23] == 5);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("conv2d identity kernel") {
  Tensor input({1, 1, 1}, {5});
  Tensor kernel({1, 1, 1, 1}, {1});
  Tensor bias({1});
  const Tensor out = conv2d(input, kernel, bias, {1, 1}, {0, 0});
  CHECK(out.size() == 1);
  CHECK(out[0] == doctest::Approx(5));
}

TEST_CASE("conv2d all-ones 3x3 on padded ones") {
  // Hand evaluation of the dot-product sum: centre sees 9 inputs, edges 6,
  // corners 4.
  Tensor input = Tensor::full({1, 3, 3}, 1);
  Tensor kernel = Tensor::full({1, 1, 3, 3}, 1);
  Tensor bias({1});
  const Tensor out = conv2d(input, kernel, bias, {1, 1}, {1, 1});
  CHECK(out.at(0, 1, 1) == doctest::Approx(9));
  CHECK(out.at(0, 0, 1) == doctest::Approx(6));
  CHECK(out.at(0, 1, 0) == doctest::Approx(6));
  CHECK(out.at(0, 0, 0) == doctest::Approx(4));
  CHECK(out.at(0, 2, 2) == doctest::Approx(4));
}

TEST_CASE("conv2d zero input stays zero") {
  Rng rng(3);
  Tensor input({2, 4, 5});
  Tensor kernel = random_tensor({3, 2, 3, 3}, rng);
  Tensor bias({3});
  const Tensor out = conv2d(input, kernel, bias, {1, 1}, {1, 1});
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0);
}

TEST_CASE("conv2d rejects channel mismatch") {
  Tensor input({2, 4, 4});
  Tensor kernel({1, 3, 3, 3});
  CHECK_THROWS_WITH_AS(conv2d(input, kernel, Tensor(), {1, 1}, {1, 1}),
                       doctest::Contains("input channels"),
                       std::invalid_argument);
}

TEST_CASE("conv2d stride-2 halves even padded inputs") {
  Rng rng(4);
  Tensor input = random_tensor({1, 8, 12}, rng);
  Tensor kernel = random_tensor({2, 1, 3, 3}, rng);
  Tensor bias({2});
  const Tensor out = conv2d(input, kernel, bias, {2, 2}, {1, 1});
  CHECK(out.dim(1) == 4);
  CHECK(out.dim(2) == 6);
}

TEST_CASE("activations match closed forms") {
  Tensor x({3}, {-1, 0, 2});
  const Tensor r = activate(x, Activation::relu);
  CHECK(r[0] == 0);
  CHECK(r[1] == 0);
  CHECK(r[2] == 2);

  Tensor zero({1}, {0});
  CHECK(activate(zero, Activation::sigmoid)[0] == doctest::Approx(0.5));

  Rng rng(11);
  Tensor xs = random_tensor({64}, rng, -3, 3);
  const Tensor t = activate(xs, Activation::tanh);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const real e = std::exp(xs[i]), em = std::exp(-xs[i]);
    CHECK(t[i] == doctest::Approx((e - em) / (e + em)).epsilon(1e-12));
  }
}

TEST_CASE("softmax uniform, stability and oracle") {
  Tensor x({3});
  const Tensor u = softmax(x, 0);
  for (int i = 0; i < 3; ++i) CHECK(u[static_cast<size_t>(i)] == doctest::Approx(1.0 / 3));

  Tensor big({2}, {1000, 0});
  const Tensor s = softmax(big, 0);
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(s[0]));

  Rng rng(5);
  Tensor v = random_tensor({5}, rng, -2, 2);
  const Tensor p = softmax(v, 0);
  real denom = 0;
  for (std::size_t i = 0; i < v.size(); ++i) denom += std::exp(v[i]);
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(p[i] == doctest::Approx(std::exp(v[i]) / denom).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one up to 1e4 magnitudes") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({4, 7}, rng, -1e4, 1e4);
    const Tensor p = softmax(x, 1);
    for (int r = 0; r < 4; ++r) {
      real sum = 0;
      for (int c = 0; c < 7; ++c) sum += p.at(r, c);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("softmax jacobian-vector product matches naive jacobian") {
  Rng rng(7);
  Tensor x = random_tensor({6}, rng, -2, 2);
  Tensor g = random_tensor({6}, rng, -1, 1);
  const Tensor p = softmax(x, 0);
  const Tensor jvp = softmax_backward(p, g, 0);
  // J[i][j] = p_i (delta_ij - p_j)
  for (int i = 0; i < 6; ++i) {
    real expect = 0;
    for (int j = 0; j < 6; ++j) {
      const real jij = p[static_cast<size_t>(i)] *
                       ((i == j ? 1.0 : 0.0) - p[static_cast<size_t>(j)]);
      expect += jij * g[static_cast<size_t>(j)];
    }
    CHECK(jvp[static_cast<size_t>(i)] == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("conv2d gradients vs central finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor input = random_tensor({2, 5, 6}, rng);
    Tensor kernel = random_tensor({3, 2, 3, 3}, rng);
    Tensor bias = random_tensor({3}, rng);
    Tensor gk(kernel.shape()), gb(bias.shape()), gi(input.shape());
    const Stride stride{2, 1}, pad{1, 1};
    Tensor weights = random_tensor(
        conv2d(input, kernel, bias, stride, pad).shape(), rng, 0.5, 1.5);

    ParamSet ps;
    ps.add("input", input, gi);
    ps.add("kernel", kernel, gk);
    ps.add("bias", bias, gb);
    auto loss = [&]() {
      return weighted_sum(conv2d(input, kernel, bias, stride, pad), weights);
    };
    auto grads = [&]() {
      ps.zero_grads();
      conv2d_backward(input, kernel, weights, stride, pad, &gi, &gk, &gb);
    };
    const auto report = check_gradients(ps, loss, grads, {});
    for (const auto& e : report) {
      INFO(e.param, " seed ", seed, " err ", e.max_rel_err);
      CHECK(e.pass);
    }
  }
}

TEST_CASE("activation gradients away from the relu kink") {
  Rng rng(21);
  for (auto kind : {Activation::relu, Activation::tanh, Activation::sigmoid}) {
    Tensor x = random_tensor({40}, rng, -2, 2);
    if (kind == Activation::relu)
      for (std::size_t i = 0; i < x.size(); ++i)
        if (std::fabs(x[i]) < 1e-3) x[i] = 0.1;  // exclude the subgradient point
    Tensor gx(x.shape());
    Tensor weights = random_tensor({40}, rng, 0.5, 1.5);
    ParamSet ps;
    ps.add("x", x, gx);
    auto loss = [&]() { return weighted_sum(activate(x, kind), weights); };
    auto grads = [&]() {
      ps.zero_grads();
      gx = activate_backward(x, kind, weights);
    };
    const auto report = check_gradients(ps, loss, grads, {});
    CHECK(all_pass(report));
  }
}

TEST_CASE("determinism: identical input gives bit-identical conv output") {
  Rng rng(8);
  Tensor input = random_tensor({2, 6, 6}, rng);
  Tensor kernel = random_tensor({2, 2, 3, 3}, rng);
  Tensor bias = random_tensor({2}, rng);
  const Tensor a = conv2d(input, kernel, bias, {1, 1}, {1, 1});
  const Tensor b = conv2d(input, kernel, bias, {1, 1}, {1, 1});
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
