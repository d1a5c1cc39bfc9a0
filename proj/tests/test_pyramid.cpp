#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mspn/pyramid.hpp"
#include "test_util.hpp"

using namespace mspn;
using test::random_tensor;

using D = double;

TEST_CASE("pyramid level sizes: 64x64 with 4 levels") {
  Rng rng(1);
  auto frame = random_tensor<D>(1, 3, 64, 64, rng, 0.0, 1.0);
  auto pyr = build_pyramid(frame, 4);
  REQUIRE(pyr.level_count() == 4);
  const int expect[4] = {64, 32, 16, 8};
  for (int l = 0; l < 4; ++l) {
    CHECK(pyr[l].h == expect[l]);
    CHECK(pyr[l].w == expect[l]);
    CHECK(pyr[l].c == 3);
  }
  CHECK(tensor_hash(pyr[0]) == tensor_hash(frame));  // level 0 is the source frame
}

TEST_CASE("averaging preserves constant frames") {
  auto frame = Tensor<D>::full(1, 3, 16, 16, 0.5);
  auto pyr = build_pyramid(frame, 3);
  for (int l = 0; l < 3; ++l) {
    CHECK(pyr[l].data.minCoeff() == doctest::Approx(0.5));
    CHECK(pyr[l].data.maxCoeff() == doctest::Approx(0.5));
  }
}

TEST_CASE("level-1 values equal hand-computed 2x2 block means") {
  Tensor<D> frame(1, 3, 4, 4);
  Rng rng(5);
  test::fill_uniform(frame, rng, 0.0, 1.0);
  auto pyr = build_pyramid(frame, 2);
  // brute-force block averaging oracle
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) {
        const double mean = (frame.at(0, c, 2 * y, 2 * x) + frame.at(0, c, 2 * y, 2 * x + 1) +
                             frame.at(0, c, 2 * y + 1, 2 * x) + frame.at(0, c, 2 * y + 1, 2 * x + 1)) /
                            4.0;
        CHECK(pyr[1].at(0, c, y, x) == doctest::Approx(mean).epsilon(1e-12));
      }
}

TEST_CASE("non-divisible size reports the offending level") {
  Rng rng(9);
  auto frame = random_tensor<D>(1, 3, 12, 12, rng, 0.0, 1.0);
  // 12 -> 6 -> 3, halving to level 3 impossible
  try {
    build_pyramid(frame, 4);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("level 3") != std::string::npos);
  }
}

TEST_CASE("pyramid suffix idempotence") {
  Rng rng(13);
  auto frame = random_tensor<D>(1, 3, 32, 32, rng, 0.0, 1.0);
  auto pyr = build_pyramid(frame, 4);
  for (int k = 1; k < 4; ++k) {
    auto sub = build_pyramid(pyr[k], 4 - k);
    for (int l = 0; l < sub.level_count(); ++l)
      CHECK(tensor_hash(sub[l]) == tensor_hash(pyr[k + l]));
  }
}

TEST_CASE("subsample operator takes interval samples") {
  Tensor<D> frame(1, 3, 4, 4);
  Rng rng(17);
  test::fill_uniform(frame, rng, 0.0, 1.0);
  auto pyr = build_pyramid(frame, 2, DownsampleOp::subsample);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x)
        CHECK(pyr[1].at(0, c, y, x) == frame.at(0, c, 2 * y, 2 * x));
}

TEST_CASE("compute_error identity is exactly zero") {
  Rng rng(19);
  auto x = random_tensor<D>(1, 3, 8, 8, rng, 0.0, 1.0);
  auto e = compute_error(x, x);
  CHECK(e.c == 6);
  CHECK(e.data.abs().maxCoeff() == 0.0);
}

TEST_CASE("compute_error single-pixel hand cases") {
  auto target = Tensor<D>::zeros(1, 3, 2, 2);
  auto pred = Tensor<D>::zeros(1, 3, 2, 2);
  SUBCASE("target above prediction") {
    target.at(0, 0, 0, 0) = 1.0;
    pred.at(0, 0, 0, 0) = 0.25;
    auto e = compute_error(target, pred);
    CHECK(e.at(0, 0, 0, 0) == doctest::Approx(0.75).epsilon(1e-12));  // positive channel
    CHECK(e.at(0, 3, 0, 0) == doctest::Approx(0.0));                  // negative channel
  }
  SUBCASE("prediction above target") {
    target.at(0, 1, 1, 1) = 0.2;
    pred.at(0, 1, 1, 1) = 0.9;
    auto e = compute_error(target, pred);
    CHECK(e.at(0, 1, 1, 1) == doctest::Approx(0.0));
    CHECK(e.at(0, 4, 1, 1) == doctest::Approx(0.7).epsilon(1e-12));
  }
}

TEST_CASE("compute_error shape mismatch throws") {
  auto a = Tensor<D>::zeros(1, 3, 4, 4);
  auto b = Tensor<D>::zeros(1, 3, 8, 8);
  CHECK_THROWS_AS(compute_error(a, b), DimensionError);
}

TEST_CASE("error populations partition the absolute difference") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    auto t = random_tensor<D>(1, 3, 6, 6, rng, 0.0, 1.0);
    auto p = random_tensor<D>(1, 3, 6, 6, rng, 0.0, 1.0);
    auto e = compute_error(t, p);
    CHECK(e.data.minCoeff() >= 0.0);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
          const double pos = e.at(0, c, y, x), neg = e.at(0, c + 3, y, x);
          CHECK((pos == 0.0 || neg == 0.0));
          CHECK(pos + neg == doctest::Approx(std::abs(t.at(0, c, y, x) - p.at(0, c, y, x))).epsilon(1e-15));
        }
  }
}

TEST_CASE("compute_error is differentiable wrt the prediction") {
  Rng rng(29);
  auto target = Var<D>::constant(random_tensor<D>(1, 3, 4, 4, rng, 0.0, 1.0));
  Var<D> pred = Var<D>::param(random_tensor<D>(1, 3, 4, 4, rng, 0.0, 1.0));
  auto res = test::grad_check<D>({{"pred", pred}}, [&] { return sum_squares(compute_error(target, pred)); });
  CHECK_MESSAGE(res.max_rel_err < 1e-5, res.worst);
}

TEST_CASE("differentiable pyramid feeds gradients back to the source") {
  Rng rng(31);
  Var<D> frame = Var<D>::param(random_tensor<D>(1, 3, 8, 8, rng, 0.0, 1.0));
  auto build = [&] {
    auto pyr = build_pyramid_var(frame, 3);
    Var<D> total = Var<D>::constant(Tensor<D>::scalar(0.0));
    for (auto& lvl : pyr) total = add(total, sum_squares(lvl));
    return total;
  };
  auto res = test::grad_check<D>({{"frame", frame}}, build);
  CHECK_MESSAGE(res.max_rel_err < 1e-6, res.worst);
}
