#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "mspn/checkpoint.hpp"
#include "mspn/network.hpp"
#include "test_util.hpp"

using namespace mspn;
namespace fs = std::filesystem;

namespace {
fs::path temp_file(const std::string& name) {
  auto p = fs::temp_directory_path() / name;
  fs::remove(p);
  return p;
}
}  // namespace

TEST_CASE("checkpoint round trip preserves every field bit-exactly") {
  Rng rng(3);
  Checkpoint<float> ck;
  ck.config_fingerprint = 0xDEADBEEF12345678ULL;
  ck.global_step = 4242;
  ck.epoch = 7;
  ck.config_json = "{\"seed\":1}";
  ck.rng_state = {1, 2, 3, 4};
  ck.scalars["ema_rs"] = -0.125;
  ck.scalars["adam.steps"] = 99;
  ck.add_tensor("model/level0/enc0.w", test::random_tensor<float>(4, 3, 3, 3, rng));
  ck.add_tensor("model/level0/enc0.b", test::random_tensor<float>(1, 4, 1, 1, rng));

  auto path = temp_file("ck_roundtrip.mspnckpt");
  ck.save(path);
  auto back = Checkpoint<float>::load(path);
  CHECK(back.config_fingerprint == ck.config_fingerprint);
  CHECK(back.global_step == 4242);
  CHECK(back.epoch == 7);
  CHECK(back.config_json == ck.config_json);
  CHECK(back.rng_state == ck.rng_state);
  CHECK(back.scalars.at("ema_rs") == -0.125);
  REQUIRE(back.tensors.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.tensors[i].first == ck.tensors[i].first);
    CHECK(tensor_hash(back.tensors[i].second) == tensor_hash(ck.tensors[i].second));
  }
  fs::remove(path);
}

TEST_CASE("precision tag mismatch is rejected") {
  Checkpoint<float> ck;
  ck.add_tensor("x", Tensor<float>::zeros(1, 1, 2, 2));
  auto path = temp_file("ck_precision.mspnckpt");
  ck.save(path);
  CHECK_THROWS_AS(Checkpoint<double>::load(path), InputError);
  fs::remove(path);
}

TEST_CASE("corrupt files are rejected") {
  auto path = temp_file("ck_bad.mspnckpt");
  {
    std::ofstream f(path, std::ios::binary);
    f << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(Checkpoint<float>::load(path), InputError);
  CHECK_THROWS_AS(Checkpoint<float>::load(temp_file("ck_missing.mspnckpt")), InputError);
  fs::remove(path);
}

TEST_CASE("model parameters restore to bit-identical behaviour") {
  ModelConfig mc;
  mc.levels = 2;
  mc.hidden_channels = 3;
  mc.bottleneck_channels = 8;
  MSPN<float> a(mc, 11);
  MSPN<float> b(mc, 999);  // different init

  Checkpoint<float> ck;
  auto pa = a.parameters();
  ck.add_params("model", pa);
  auto path = temp_file("ck_model.mspnckpt");
  ck.save(path);

  auto loaded = Checkpoint<float>::load(path);
  auto pb = b.parameters();
  loaded.load_params("model", pb);

  Rng rng(5);
  std::vector<Tensor<float>> frames{test::random_tensor<float>(1, 3, 16, 16, rng, 0.0, 1.0),
                                    test::random_tensor<float>(1, 3, 16, 16, rng, 0.0, 1.0)};
  NoGradGuard ng;
  auto ra = a.rollout(frames, 2, 0, RolloutMode::teacher_forced);
  auto rb = b.rollout(frames, 2, 0, RolloutMode::teacher_forced);
  for (std::size_t t = 0; t < ra.level_preds.size(); ++t)
    for (std::size_t l = 0; l < ra.level_preds[t].size(); ++l)
      CHECK(tensor_hash(ra.level_preds[t][l].value()) == tensor_hash(rb.level_preds[t][l].value()));
  fs::remove(path);

  SUBCASE("missing names are reported") {
    Checkpoint<float> empty;
    CHECK_THROWS_AS(empty.load_params("model", pb), InputError);
  }
  SUBCASE("shape mismatches are reported") {
    ModelConfig other = mc;
    other.hidden_channels = 5;
    MSPN<float> c(other, 1);
    auto pc = c.parameters();
    CHECK_THROWS_AS(loaded.load_params("model", pc), InputError);
  }
}

TEST_CASE("adam state round trips through a checkpoint") {
  Rng rng(7);
  Var<float> p = Var<float>::param(test::random_tensor<float>(2, 2, 3, 3, rng));
  ParamList<float> params{{"p", p}};
  Adam<float> opt(params, 1e-2);
  for (int i = 0; i < 3; ++i) {
    opt.zero_grad();
    backward(sum_squares(p));
    opt.step();
  }
  Checkpoint<float> ck;
  ck.add_adam("adam", opt);
  auto path = temp_file("ck_adam.mspnckpt");
  ck.save(path);
  auto loaded = Checkpoint<float>::load(path);

  Adam<float> fresh(params, 1e-2);
  loaded.load_adam("adam", fresh);
  CHECK(fresh.steps_taken() == 3);
  CHECK(tensor_hash(fresh.moment1(0)) == tensor_hash(opt.moment1(0)));
  CHECK(tensor_hash(fresh.moment2(0)) == tensor_hash(opt.moment2(0)));
  fs::remove(path);
}
