// Coarse-to-fine frame pyramids and the two-population prediction-error maps.
#pragma once

#include <vector>

#include "mspn/nn.hpp"

namespace mspn {

enum class DownsampleOp { average, subsample };

inline const char* to_string(DownsampleOp op) {
  return op == DownsampleOp::average ? "average" : "subsample";
}

template <class S>
Var<S> downsample2(const Var<S>& x, DownsampleOp op) {
  return op == DownsampleOp::average ? avg_pool2(x) : subsample2(x);
}

// Ordered list of downsampled targets; level 0 is the source frame itself,
// level l has spatial size (H/2^l, W/2^l).
template <class S>
struct FramePyramid {
  std::vector<Tensor<S>> levels;
  int level_count() const { return int(levels.size()); }
  const Tensor<S>& operator[](int l) const { return levels[std::size_t(l)]; }
};

namespace detail {
template <class S>
void check_pyramid_pre(const Tensor<S>& frame, int levels) {
  if (levels < 1) throw ContractViolation("build_pyramid: levels must be >= 1");
  int h = frame.h, w = frame.w;
  for (int l = 1; l < levels; ++l) {
    if (h % 2 != 0 || w % 2 != 0)
      throw DimensionError("build_pyramid: level " + std::to_string(l) + " would need halving " +
                           std::to_string(h) + "x" + std::to_string(w) + ", not divisible by 2");
    h /= 2;
    w /= 2;
  }
}
}  // namespace detail

template <class S>
FramePyramid<S> build_pyramid(const Tensor<S>& frame, int levels, DownsampleOp op = DownsampleOp::average) {
  detail::check_pyramid_pre(frame, levels);
  FramePyramid<S> pyr;
  pyr.levels.reserve(std::size_t(levels));
  pyr.levels.push_back(frame);
  NoGradGuard ng;
  for (int l = 1; l < levels; ++l) {
    Var<S> prev = Var<S>::constant(pyr.levels.back());
    pyr.levels.push_back(downsample2(prev, op).value());
  }
  return pyr;
}

// Differentiable variant used for predicted-feedback targets.
template <class S>
std::vector<Var<S>> build_pyramid_var(const Var<S>& frame, int levels, DownsampleOp op = DownsampleOp::average) {
  detail::check_pyramid_pre(frame.value(), levels);
  std::vector<Var<S>> pyr;
  pyr.reserve(std::size_t(levels));
  pyr.push_back(frame);
  for (int l = 1; l < levels; ++l) pyr.push_back(downsample2(pyr.back(), op));
  return pyr;
}

// E = concat(ReLU(target - prediction), ReLU(prediction - target)) along channels.
// First half of the channels carries positive error, second half negative error.
template <class S>
Var<S> compute_error(const Var<S>& target, const Var<S>& prediction) {
  require_same_shape(target.value(), prediction.value(), "compute_error");
  Var<S> diff = sub(target, prediction);
  return concat_ch<S>({relu(diff), relu(scale(diff, -1.0))});
}

template <class S>
Tensor<S> compute_error(const Tensor<S>& target, const Tensor<S>& prediction) {
  NoGradGuard ng;
  return compute_error(Var<S>::constant(target), Var<S>::constant(prediction)).value();
}

}  // namespace mspn
