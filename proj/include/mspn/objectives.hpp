// Training objectives: weighted pixel loss (sum of squared Euclidean distances,
// no element-count normalization), the quadratic-score adversarial losses, and
// their weighted combination.
#pragma once

#include <cmath>
#include <vector>

#include "mspn/network.hpp"

namespace mspn {

struct LossWeights {
  int levels = 1;
  double lambda_adv = 100.0;

  // weighting factor by time: 0 at t=0, 1 for t>0
  double lambda_t(int t) const { return t == 0 ? 0.0 : 1.0; }
  // weighting factor by level: (L-l)/L, so level 0 carries weight 1
  double lambda_l(int l) const { return double(levels - l) / double(levels); }
};

// sum_t sum_l lambda_t(t) * lambda_l(l) * ||target - prediction||^2
template <class S>
Var<S> pixel_loss(const std::vector<FramePyramid<S>>& targets,
                  const std::vector<std::vector<Var<S>>>& predictions, const LossWeights& weights) {
  if (targets.size() != predictions.size())
    throw DimensionError("pixel_loss: " + std::to_string(targets.size()) + " target steps vs " +
                         std::to_string(predictions.size()) + " prediction steps");
  Var<S> total = Var<S>::constant(Tensor<S>::scalar(S(0)));
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const double wt = weights.lambda_t(int(t));
    if (wt == 0.0) continue;
    if (targets[t].levels.size() != predictions[t].size())
      throw DimensionError("pixel_loss: level count mismatch at t=" + std::to_string(t));
    for (std::size_t l = 0; l < predictions[t].size(); ++l) {
      require_same_shape(targets[t].levels[l], predictions[t][l].value(), "pixel_loss");
      Var<S> diff = sub(predictions[t][l], Var<S>::constant(targets[t].levels[l]));
      total = add(total, scale(sum_squares(diff), wt * weights.lambda_l(int(l))));
    }
  }
  return total;
}

template <class S>
double pixel_loss_value(const std::vector<FramePyramid<S>>& targets,
                        const std::vector<std::vector<Tensor<S>>>& predictions, const LossWeights& weights) {
  NoGradGuard ng;
  std::vector<std::vector<Var<S>>> preds;
  preds.reserve(predictions.size());
  for (const auto& step : predictions) {
    std::vector<Var<S>> row;
    for (const auto& p : step) row.push_back(Var<S>::constant(p));
    preds.push_back(std::move(row));
  }
  return double(scalar_of(pixel_loss(targets, preds, weights)));
}

// L_D = (R_s - 1)^2 + (P_s + 1)^2
inline double discriminator_loss(double real_score, double fake_score) {
  if (!std::isfinite(real_score) || !std::isfinite(fake_score))
    throw NumericError("discriminator_loss: non-finite score");
  const double a = real_score - 1.0, b = fake_score + 1.0;
  return a * a + b * b;
}

template <class S>
Var<S> discriminator_loss(const Var<S>& real_score, const Var<S>& fake_score) {
  if (!real_score.value().all_finite() || !fake_score.value().all_finite())
    throw NumericError("discriminator_loss: non-finite score");
  Var<S> a = add_const(real_score, -1.0);
  Var<S> b = add_const(fake_score, 1.0);
  return add(mul(a, a), mul(b, b));
}

// L_G = (P_s - 1)^2
inline double generator_adv_loss(double fake_score) {
  if (!std::isfinite(fake_score)) throw NumericError("generator_adv_loss: non-finite score");
  const double a = fake_score - 1.0;
  return a * a;
}

template <class S>
Var<S> generator_adv_loss(const Var<S>& fake_score) {
  if (!fake_score.value().all_finite()) throw NumericError("generator_adv_loss: non-finite score");
  Var<S> a = add_const(fake_score, -1.0);
  return mul(a, a);
}

// L_generator = L_pix + lambda * L_G
inline double total_generator_loss(double pixel, double adv, const LossWeights& weights) {
  return pixel + weights.lambda_adv * adv;
}

template <class S>
Var<S> total_generator_loss(const Var<S>& pixel, const Var<S>& adv, const LossWeights& weights) {
  return add(pixel, scale(adv, weights.lambda_adv));
}

}  // namespace mspn
