#include <cmath>

#include "doctest.h"
#include "pararec/encoder.hpp"
#include "pararec/errors.hpp"
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

EncoderConfig micro_config() {
  EncoderConfig cfg;
  cfg.cb_channels = {2, 3};
  cfg.cb_strides = {{2, 2}, {1, 1}};
  cfg.dscb_channels = {3};
  return cfg;
}

}  // namespace

TEST_CASE("conv block stride shapes") {
  EncoderConfig cfg;
  cfg.cb_channels = {1};
  cfg.cb_strides = {{2, 2}};
  cfg.dscb_channels = {};
  ConvBlock block(1, 1, {2, 2}, cfg);
  Rng rng(1);
  block.init(rng);
  Rng drop(2);
  Tensor x = random_tensor({1, 32, 32}, rng);
  const Tensor out = block.forward(x, false, drop);
  CHECK(out.dim(1) == 16);
  CHECK(out.dim(2) == 16);
}

TEST_CASE("conv block on zero input is deterministic affine of norm shifts") {
  EncoderConfig cfg = micro_config();
  ConvBlock block(1, 2, {1, 1}, cfg);
  Rng rng(3);
  block.init(rng);
  Rng drop(4);
  Tensor x({1, 8, 8});
  const Tensor a = block.forward(x, false, drop);
  const Tensor b = block.forward(x, false, drop);
  CHECK(a.all_finite());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("toy geometry: 64x64 maps to 8x16 features") {
  EncoderConfig cfg = EncoderConfig::toy();
  Encoder enc(1, cfg);
  Rng rng(5);
  enc.init(rng);
  Rng drop(6);
  Tensor img = random_tensor({1, 64, 64}, rng, 0, 1);
  const Tensor feats = enc.forward(img, false, drop);
  CHECK(feats.dim(0) == 64);
  CHECK(feats.dim(1) == 8);
  CHECK(feats.dim(2) == 16);
  const auto dims = enc.feature_dims(64, 64);
  CHECK(dims.first == 8);
  CHECK(dims.second == 16);
}

TEST_CASE("full geometry maps 480x800 to 15x100 by the stride law") {
  EncoderConfig cfg = EncoderConfig::full();
  const auto product = cfg.stride_product();
  CHECK(product.first == 32);
  CHECK(product.second == 8);
  Encoder enc(1, cfg);
  const auto dims = enc.feature_dims(480, 800);
  CHECK(dims.first == 15);
  CHECK(dims.second == 100);
}

TEST_CASE("eval forward is deterministic and residuals apply on matching shapes") {
  EncoderConfig cfg = micro_config();
  Encoder enc(1, cfg);
  Rng rng(7);
  enc.init(rng);
  Rng drop(8);
  Tensor img = random_tensor({1, 16, 16}, rng, 0, 1);
  const Tensor a = enc.forward(img, false, drop);
  const Tensor b = enc.forward(img, false, drop);
  REQUIRE(a.same_shape(b));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("residual equals block(x) + x when shapes match") {
  // Single channel-preserving stride-1 block: the encoder must add x.
  EncoderConfig cfg;
  cfg.cb_channels = {2};
  cfg.cb_strides = {{1, 1}};
  cfg.dscb_channels = {};
  Encoder enc(2, cfg);
  Rng rng(9);
  enc.init(rng);

  // An identical standalone block with the same init sequence.
  ConvBlock block(2, 2, {1, 1}, cfg);
  Rng rng2(9);
  block.init(rng2);

  Rng drop(1);
  Tensor x = random_tensor({2, 6, 6}, rng, 0, 1);
  const Tensor with_residual = enc.forward(x, false, drop);
  const Tensor bare = block.forward(x, false, drop);
  REQUIRE(with_residual.same_shape(bare));
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(with_residual[i] == doctest::Approx(bare[i] + x[i]).epsilon(1e-12));
}

TEST_CASE("encoder aborts with block name on non-finite activations") {
  EncoderConfig cfg = micro_config();
  Encoder enc(1, cfg);
  Rng rng(10);
  enc.init(rng);
  Rng drop(11);
  Tensor img({1, 16, 16});
  img[0] = std::numeric_limits<real>::infinity();
  try {
    enc.forward(img, false, drop);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.where().find("encoder.cb") != std::string::npos);
  }
}

TEST_CASE("dsc encoder has strictly fewer parameters than dense topology") {
  EncoderConfig cfg = EncoderConfig::toy();
  Encoder enc(1, cfg);
  for (const DscBlock& block : enc.dsc_blocks())
    CHECK(block.weight_count() < block.dense_equivalent_count());
}

TEST_CASE("gated placement variants run and differ") {
  Rng drop(12);
  Tensor img;
  {
    Rng rng(13);
    img = random_tensor({1, 16, 16}, rng, 0, 1);
  }
  std::vector<Tensor> outputs;
  for (GatedPlacement placement :
       {GatedPlacement::early, GatedPlacement::late, GatedPlacement::none}) {
    EncoderConfig cfg = micro_config();
    cfg.gated_placement = placement;
    Encoder enc(1, cfg);
    Rng rng(14);
    enc.init(rng);
    outputs.push_back(enc.forward(img, false, drop));
  }
  REQUIRE(outputs[0].same_shape(outputs[1]));
  bool early_vs_late_differ = false;
  for (std::size_t i = 0; i < outputs[0].size(); ++i)
    if (outputs[0][i] != outputs[1][i]) early_vs_late_differ = true;
  CHECK(early_vs_late_differ);
}

TEST_CASE("full encoder gradcheck on a micro config") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    EncoderConfig cfg = micro_config();
    Encoder enc(1, cfg);
    Rng rng(seed);
    enc.init(rng);
    Tensor x = random_tensor({1, 8, 12}, rng, 0, 1);
    Rng drop(0);
    Tensor weights =
        random_tensor(enc.forward(x, false, drop).shape(), rng, 0.5, 1.5);

    ParamSet ps;
    enc.collect_params(ps, "encoder");
    auto loss = [&]() {
      Rng d(0);
      return weighted_sum(enc.forward(x, false, d), weights);
    };
    auto grads = [&]() {
      ps.zero_grads();
      Rng d(0);
      enc.forward(x, false, d);
      enc.backward(weights);
    };
    GradCheckOptions opt;
    opt.max_probes_per_tensor = 120;
    opt.seed = seed;
    CHECK(all_pass(check_gradients(ps, loss, grads, opt)));
  }
}
