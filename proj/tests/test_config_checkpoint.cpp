#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "pararec/checkpoint.hpp"
#include "pararec/config.hpp"
#include "pararec/errors.hpp"

using namespace pararec;
namespace fs = std::filesystem;

namespace {

fs::path scratch_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pararec_cfg_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("config file parsing with comments and overrides") {
  const fs::path path = scratch_file("ok.cfg");
  {
    std::ofstream f(path);
    f << "# comment line\n";
    f << "seed=99\n";
    f << "learning_rate=0.5   # trailing comment\n";
    f << "cb_channels=4,8\n";
    f << "cb_strides=2x2,2x1\n";
    f << "gated_placement=late\n";
    f << "\n";
  }
  const RunConfig cfg = RunConfig::from_file(path);
  CHECK(cfg.seed == 99);
  CHECK(cfg.learning_rate == doctest::Approx(0.5));
  CHECK(cfg.cb_channels == std::vector<int>{4, 8});
  REQUIRE(cfg.cb_strides.size() == 2);
  CHECK(cfg.cb_strides[1].first == 2);
  CHECK(cfg.cb_strides[1].second == 1);
  CHECK(cfg.encoder_config().gated_placement == GatedPlacement::late);
}

TEST_CASE("unknown keys are rejected with the key and line number") {
  const fs::path path = scratch_file("unknown.cfg");
  {
    std::ofstream f(path);
    f << "seed=1\n";
    f << "not_a_key=2\n";
  }
  try {
    RunConfig::from_file(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("not_a_key") != std::string::npos);
    CHECK(msg.find(":2") != std::string::npos);
  }
}

TEST_CASE("bad values name the offending key") {
  RunConfig cfg;
  CHECK_THROWS_WITH_AS(cfg.set("iterations", "many"),
                       doctest::Contains("iterations"), DataError);
  CHECK_THROWS_WITH_AS(cfg.set("cb_strides", "2,2"), doctest::Contains("cb_strides"),
                       DataError);
}

TEST_CASE("config validation rejects inconsistent settings") {
  RunConfig cfg;
  cfg.precision = "f16";
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg.precision = "f64";
  cfg.optimizer = "lbfgs";
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg.optimizer = "sgd";
  cfg.cb_strides = {{2, 2}};  // count mismatch vs 4 channel entries
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("serialize/deserialize round trip") {
  RunConfig cfg;
  cfg.seed = 7;
  cfg.hidden_size = 96;
  cfg.wbs_mode = "words";
  cfg.target_height = 480;
  cfg.target_width = 800;
  const RunConfig back = RunConfig::deserialize(cfg.serialize());
  CHECK(back.seed == 7);
  CHECK(back.hidden_size == 96);
  CHECK(back.wbs_mode == "words");
  CHECK(back.target_height == 480);
  CHECK(back.target_width == 800);
}

TEST_CASE("checkpoint round trip restores parameters bit-identically") {
  RunConfig cfg;
  Tensor a({2, 3}), b({4});
  Tensor ga({2, 3}), gb({4});
  Rng rng(5);
  fill_uniform(a, -1, 1, rng);
  fill_uniform(b, -1, 1, rng);
  ParamSet ps;
  ps.add("layer.a", a, ga);
  ps.add("layer.b", b, gb);

  const fs::path path = scratch_file("ckpt.bin");
  save_checkpoint(path, cfg, U"ab ", 123, ps);
  const LoadedCheckpoint loaded = load_checkpoint(path);
  CHECK(loaded.alphabet == U"ab ");
  CHECK(loaded.iterations_done == 123);
  CHECK(loaded.config.seed == cfg.seed);

  Tensor a2({2, 3}), b2({4});
  Tensor ga2({2, 3}), gb2({4});
  ParamSet ps2;
  ps2.add("layer.a", a2, ga2);
  ps2.add("layer.b", b2, gb2);
  restore_params(loaded, ps2);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a2[i] == a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(b2[i] == b[i]);
}

TEST_CASE("f32 checkpoints load with reduced precision") {
  RunConfig cfg;
  cfg.precision = "f32";
  Tensor a({3});
  Tensor ga({3});
  a[0] = 0.1234567890123456789;
  a[1] = -2.5;
  a[2] = 1e-20;
  ParamSet ps;
  ps.add("w", a, ga);
  const fs::path path = scratch_file("ckpt32.bin");
  save_checkpoint(path, cfg, U"a", 0, ps);
  const LoadedCheckpoint loaded = load_checkpoint(path);
  const Tensor& w = loaded.params.at("w");
  CHECK(w[0] == doctest::Approx(a[0]).epsilon(1e-7));
  CHECK(w[0] != a[0]);  // narrowed
  CHECK(w[1] == -2.5);  // exactly representable
}

TEST_CASE("wrong magic and missing parameters are rejected") {
  const fs::path path = scratch_file("junk.bin");
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOPE";
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);

  RunConfig cfg;
  Tensor a({2}), ga({2});
  ParamSet ps;
  ps.add("w", a, ga);
  const fs::path good = scratch_file("good.bin");
  save_checkpoint(good, cfg, U"a", 0, ps);
  const LoadedCheckpoint loaded = load_checkpoint(good);

  Tensor b({2}), gb({2});
  Tensor c({3}), gc({3});
  ParamSet wrong_name, wrong_shape;
  wrong_name.add("other", b, gb);
  CHECK_THROWS_WITH_AS(restore_params(loaded, wrong_name),
                       doctest::Contains("other"), DataError);
  wrong_shape.add("w", c, gc);
  CHECK_THROWS_WITH_AS(restore_params(loaded, wrong_shape),
                       doctest::Contains("shape"), DataError);
}
