#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mspn/objectives.hpp"
#include "test_util.hpp"

using namespace mspn;
using test::random_tensor;

using D = double;

namespace {

FramePyramid<D> single_level(const Tensor<D>& t) {
  FramePyramid<D> p;
  p.levels.push_back(t);
  return p;
}

}  // namespace

TEST_CASE("lambda weight rules") {
  LossWeights w;
  w.levels = 4;
  CHECK(w.lambda_t(0) == 0.0);
  CHECK(w.lambda_t(1) == 1.0);
  CHECK(w.lambda_t(7) == 1.0);
  CHECK(w.lambda_l(0) == 1.0);
  for (int l = 1; l < 4; ++l) CHECK(w.lambda_l(l) < w.lambda_l(l - 1));
  CHECK(w.lambda_l(2) == doctest::Approx(0.5));
  CHECK(w.lambda_adv == 100.0);
}

TEST_CASE("pixel loss is zero when predictions equal targets") {
  Rng rng(3);
  LossWeights w;
  w.levels = 1;
  auto a = random_tensor<D>(1, 3, 2, 2, rng);
  std::vector<FramePyramid<D>> targets{single_level(a), single_level(a)};
  std::vector<std::vector<Tensor<D>>> preds{{a}, {a}};
  CHECK(pixel_loss_value(targets, preds, w) == 0.0);
}

TEST_CASE("pixel loss hand sum: 0.5 everywhere over 3x2x2 at t=1") {
  LossWeights w;
  w.levels = 1;
  auto target = Tensor<D>::zeros(1, 3, 2, 2);
  auto pred = Tensor<D>::full(1, 3, 2, 2, 0.5);
  std::vector<FramePyramid<D>> targets{single_level(target), single_level(target)};
  std::vector<std::vector<Tensor<D>>> preds{{target}, {pred}};
  CHECK(pixel_loss_value(targets, preds, w) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("differences at t=0 contribute nothing") {
  Rng rng(7);
  LossWeights w;
  w.levels = 1;
  auto target = random_tensor<D>(1, 3, 2, 2, rng);
  auto perturbed = random_tensor<D>(1, 3, 2, 2, rng);
  std::vector<FramePyramid<D>> targets{single_level(target)};
  std::vector<std::vector<Tensor<D>>> preds{{perturbed}};
  CHECK(pixel_loss_value(targets, preds, w) == 0.0);
}

TEST_CASE("pixel loss scales quadratically with the residual") {
  Rng rng(11);
  LossWeights w;
  w.levels = 1;
  auto target = Tensor<D>::zeros(1, 3, 4, 4);
  auto resid = random_tensor<D>(1, 3, 4, 4, rng);
  Tensor<D> doubled = resid;
  doubled.data *= 2.0;
  std::vector<FramePyramid<D>> targets{single_level(target), single_level(target)};
  const double l1 = pixel_loss_value(targets, {{target}, {resid}}, w);
  const double l2 = pixel_loss_value(targets, {{target}, {doubled}}, w);
  CHECK(l2 == doctest::Approx(4.0 * l1).epsilon(1e-12));
  CHECK(l1 >= 0.0);
}

TEST_CASE("pixel loss applies level weights") {
  LossWeights w;
  w.levels = 2;
  auto t0 = Tensor<D>::zeros(1, 3, 4, 4);
  auto t1 = Tensor<D>::zeros(1, 3, 2, 2);
  FramePyramid<D> pyr;
  pyr.levels = {t0, t1};
  auto p0 = Tensor<D>::full(1, 3, 4, 4, 1.0);  // 48 elements -> ssd 48
  auto p1 = Tensor<D>::full(1, 3, 2, 2, 1.0);  // 12 elements -> ssd 12
  std::vector<FramePyramid<D>> targets{pyr, pyr};
  std::vector<std::vector<Tensor<D>>> preds{{t0, t1}, {p0, p1}};
  // lambda_l(0)=1, lambda_l(1)=0.5 -> 48 + 6
  CHECK(pixel_loss_value(targets, preds, w) == doctest::Approx(54.0).epsilon(1e-12));
}

TEST_CASE("pixel loss rejects misaligned structures") {
  LossWeights w;
  w.levels = 1;
  auto a = Tensor<D>::zeros(1, 3, 2, 2);
  std::vector<FramePyramid<D>> targets{single_level(a), single_level(a)};
  std::vector<std::vector<Tensor<D>>> preds{{a}};
  CHECK_THROWS_AS(pixel_loss_value(targets, preds, w), DimensionError);
  std::vector<std::vector<Tensor<D>>> preds2{{a}, {a, a}};
  CHECK_THROWS_AS(pixel_loss_value(targets, preds2, w), DimensionError);
}

TEST_CASE("pixel loss gradient flows through predictions") {
  Rng rng(13);
  LossWeights w;
  w.levels = 1;
  auto target = random_tensor<D>(1, 3, 2, 2, rng);
  Var<D> pred = Var<D>::param(random_tensor<D>(1, 3, 2, 2, rng));
  std::vector<FramePyramid<D>> targets{single_level(target), single_level(target)};
  auto build = [&] {
    std::vector<std::vector<Var<D>>> preds{{Var<D>::constant(target)}, {pred}};
    return pixel_loss(targets, preds, w);
  };
  auto res = test::grad_check<D>({{"pred", pred}}, build);
  CHECK_MESSAGE(res.max_rel_err < 1e-6, res.worst);
}

TEST_CASE("discriminator loss hand cases") {
  CHECK(discriminator_loss(1.0, -1.0) == 0.0);
  CHECK(discriminator_loss(0.0, 0.0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(discriminator_loss(0.5, -0.5) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(discriminator_loss(std::nan(""), 0.0), NumericError);
}

TEST_CASE("generator adversarial loss hand cases") {
  CHECK(generator_adv_loss(1.0) == 0.0);
  CHECK(generator_adv_loss(-1.0) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(generator_adv_loss(0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(generator_adv_loss(std::numeric_limits<double>::infinity()), NumericError);
}

TEST_CASE("total generator loss combines with lambda = 100") {
  LossWeights w;
  CHECK(total_generator_loss(3.0, 0.0, w) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(total_generator_loss(0.0, 0.5, w) == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(total_generator_loss(2.0, 0.01, w) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("adversarial losses are minimized at their score targets") {
  // scan a score grid; the quadratic forms have unique minima at (1,-1) and 1
  double best_d = 1e9, best_rs = 0, best_ps = 0;
  for (double rs = -2.0; rs <= 2.0; rs += 0.125)
    for (double ps = -2.0; ps <= 2.0; ps += 0.125) {
      const double ld = discriminator_loss(rs, ps);
      if (ld < best_d) best_d = ld, best_rs = rs, best_ps = ps;
    }
  CHECK(best_rs == doctest::Approx(1.0));
  CHECK(best_ps == doctest::Approx(-1.0));
  double best_g = 1e9, best_g_ps = 0;
  for (double ps = -2.0; ps <= 2.0; ps += 0.125) {
    const double lg = generator_adv_loss(ps);
    if (lg < best_g) best_g = lg, best_g_ps = ps;
  }
  CHECK(best_g_ps == doctest::Approx(1.0));
}

TEST_CASE("graph forms of the adversarial losses match the scalar forms") {
  Var<D> rs = Var<D>::param(Tensor<D>::scalar(0.3));
  Var<D> ps = Var<D>::param(Tensor<D>::scalar(-0.2));
  CHECK(scalar_of(discriminator_loss(rs, ps)) == doctest::Approx(discriminator_loss(0.3, -0.2)).epsilon(1e-12));
  CHECK(scalar_of(generator_adv_loss(ps)) == doctest::Approx(generator_adv_loss(-0.2)).epsilon(1e-12));
  auto res = test::grad_check<D>({{"rs", rs}, {"ps", ps}}, [&] { return discriminator_loss(rs, ps); });
  CHECK_MESSAGE(res.max_rel_err < 1e-7, res.worst);
}
