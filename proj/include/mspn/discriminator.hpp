// Residual-block image scorer: a stack of downsampling residual stages with
// channel doubling, global average pooling and a scalar projection. Scores are
// unbounded; the quadratic losses supply the +/-1 targets.
#pragma once

#include <string>
#include <vector>

#include "mspn/nn.hpp"

namespace mspn {

struct DiscriminatorConfig {
  int in_channels = 3;
  int base_channels = 16;
  int stages = 4;  // clamped so the final map stays at least 1x1
  NormKind norm = NormKind::none;  // score heads with quadratic losses are sensitive to normalization
};

template <class S>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const DiscriminatorConfig& cfg, int height, int width, std::uint64_t seed)
      : cfg_(cfg), height_(height), width_(width) {
    Rng rng(seed);
    int max_stages = 0;
    for (int hw = std::min(height, width); hw >= 2 && max_stages < cfg.stages; hw /= 2) ++max_stages;
    stages_used_ = max_stages;
    if (stages_used_ < 1) throw InputError("discriminator: input too small for any residual stage");
    stem_ = Conv2d<S>(cfg.in_channels, cfg.base_channels, 3, 1, rng);
    int ch = cfg.base_channels;
    for (int i = 0; i < stages_used_; ++i) {
      Stage st;
      st.reduce = Conv2d<S>(ch, 2 * ch, 3, 2, rng);
      st.mix = Conv2d<S>(2 * ch, 2 * ch, 3, 1, rng);
      st.skip = Conv2d<S>(ch, 2 * ch, 1, 2, rng);
      stages_.push_back(std::move(st));
      ch *= 2;
    }
    head_ = Conv2d<S>(ch, 1, 1, 1, rng);
  }

  // one scalar per frame: (N,3,H,W) -> (N,1,1,1)
  Var<S> scores(const Var<S>& frames) const {
    const auto& v = frames.value();
    if (v.c != cfg_.in_channels || v.h != height_ || v.w != width_)
      throw DimensionError("discriminator: expected (*," + std::to_string(cfg_.in_channels) + "," +
                           std::to_string(height_) + "," + std::to_string(width_) + "), got " + v.shape_str());
    Var<S> x = relu(stem_(frames));
    for (const auto& st : stages_) {
      Var<S> h = st.reduce(x);
      if (cfg_.norm == NormKind::instance && h.value().h > 1 && h.value().w > 1) h = instance_norm(h);
      Var<S> y = st.mix(relu(h));
      x = relu(add(y, st.skip(x)));
    }
    return head_(global_avg_pool(x));
  }

  // batch mean of per-frame scores, as a graph scalar
  Var<S> mean_score(const Var<S>& frames) const { return mean_all(scores(frames)); }

  double score(const Tensor<S>& frame) const {
    NoGradGuard ng;
    return double(scalar_of(mean_score(Var<S>::constant(frame))));
  }

  int expected_height() const { return height_; }
  int expected_width() const { return width_; }
  int stages_used() const { return stages_used_; }

  void collect_params(const std::string& prefix, ParamList<S>& out) const {
    stem_.collect(prefix + "/stem", out);
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      stages_[i].reduce.collect(prefix + "/res" + std::to_string(i) + "/reduce", out);
      stages_[i].mix.collect(prefix + "/res" + std::to_string(i) + "/mix", out);
      stages_[i].skip.collect(prefix + "/res" + std::to_string(i) + "/skip", out);
    }
    head_.collect(prefix + "/head", out);
  }

 private:
  struct Stage {
    Conv2d<S> reduce, mix, skip;
  };
  DiscriminatorConfig cfg_;
  int height_ = 0, width_ = 0, stages_used_ = 0;
  Conv2d<S> stem_;
  std::vector<Stage> stages_;
  Conv2d<S> head_;
};

}  // namespace mspn
