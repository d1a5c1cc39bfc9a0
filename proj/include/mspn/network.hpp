// Multi-scale predictive network: per-timestep top-down prediction pass and
// bottom-up error pass across L levels, with teacher-forced and
// predicted-feedback rollout modes.
//
// Wiring per step (levels indexed 0 = finest .. L-1 = top, processed top-down):
//   top level:     { E_local, E_lower }
//   middle levels: { E_local, E_lower, P_higher } + fused higher code
//   bottom level:  { E_local, P_higher } + fused higher code
// The higher prediction is upsampled 2x (nearest) to the consumer's resolution;
// the lower error map is reduced 2x with the pyramid operator. Semantic codes
// share one bottleneck resolution across levels and pass through unscaled.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mspn/edlstm.hpp"
#include "mspn/pyramid.hpp"

namespace mspn {

struct ModelConfig {
  int levels = 4;
  int hidden_channels = 64;
  int bottleneck_channels = 64;  // at level 0; halves per level upward
  int kernel = 3;
  DownsampleOp downsample = DownsampleOp::average;
  NormKind codec_norm = NormKind::none;

  int bottleneck_at(int level) const {
    int b = bottleneck_channels >> level;
    return b < 2 ? 2 : b;
  }
};

enum class RolloutMode { teacher_forced, predicted_feedback };

inline const char* to_string(RolloutMode m) {
  return m == RolloutMode::teacher_forced ? "teacher_forced" : "predicted_feedback";
}

template <class S>
struct LevelState {
  CellState<S> cell;
  Var<S> error;  // E_{t-1}^l, 6 channels at level resolution
  Var<S> pred;   // P_t^l once the step's top-down pass ran
  Var<S> code;   // v_t^l (post-fusion bottleneck activation)
  int error_t = -1;
};

template <class S>
struct NetworkState {
  std::vector<LevelState<S>> levels;
  int t = 0;
  bool awaiting_bottom_up = false;
  RolloutMode mode = RolloutMode::teacher_forced;
  int batch = 0, height = 0, width = 0;
};

// One step's input routing, for wiring verification.
struct WireTap {
  std::string label;
  std::uint64_t hash;
};
struct StepTrace {
  int t = 0;
  std::vector<std::vector<WireTap>> level_inputs;  // [level] -> taps, in concat order
};

template <class S>
class MSPN {
 public:
  MSPN() = default;
  MSPN(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    if (cfg.levels < 1) throw InputError("model: levels must be >= 1");
    Rng rng(init_seed);
    cells_.reserve(std::size_t(cfg.levels));
    for (int l = 0; l < cfg.levels; ++l) {
      CellConfig cc;
      cc.level = l;
      cc.hidden_channels = cfg.hidden_channels;
      cc.encoder_stages = cfg.levels - l;
      cc.bottleneck_channels = cfg.bottleneck_at(l);
      cc.kernel = cfg.kernel;
      cc.norm = cfg.codec_norm;
      const bool top = (l == cfg.levels - 1);
      const bool bottom = (l == 0);
      cc.input_channels = 6;                      // local error
      if (!bottom) cc.input_channels += 6;        // lower error
      if (!top) cc.input_channels += 3;           // upsampled higher prediction
      cc.higher_code_channels = top ? 0 : cfg.bottleneck_at(l + 1);
      cells_.emplace_back(cc, rng);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  int levels() const { return cfg_.levels; }
  EDLSTMCell<S>& cell(int l) { return cells_[std::size_t(l)]; }

  NetworkState<S> initial_state(int batch, int height, int width, RolloutMode mode) const {
    const int L = cfg_.levels;
    const int div = 1 << L;
    if (height % div != 0 || width % div != 0)
      throw DimensionError("network: input " + std::to_string(height) + "x" + std::to_string(width) +
                           " must be divisible by 2^levels = " + std::to_string(div));
    NetworkState<S> st;
    st.mode = mode;
    st.batch = batch;
    st.height = height;
    st.width = width;
    st.levels.resize(std::size_t(L));
    for (int l = 0; l < L; ++l) {
      const int hl = height >> l, wl = width >> l;
      auto& ls = st.levels[std::size_t(l)];
      ls.cell = cells_[std::size_t(l)].initial_state(batch, hl, wl);
      ls.error = Var<S>::constant(Tensor<S>::zeros(batch, 6, hl, wl));  // errors start at zero
      ls.error_t = -1;
    }
    return st;
  }

  // Top-down pass: produces P_t^l for every level, strictly from l = L-1 down to 0.
  std::vector<Var<S>> step_top_down(NetworkState<S>& st, StepTrace* trace = nullptr) const {
    const int L = cfg_.levels;
    if (int(st.levels.size()) != L) throw ContractViolation("step_top_down: state has wrong level count");
    if (st.awaiting_bottom_up)
      throw ContractViolation("step_top_down: previous step's bottom-up pass has not run");
    for (int l = 0; l < L; ++l)
      if (st.levels[std::size_t(l)].error_t != st.t - 1)
        throw ContractViolation("step_top_down: stale error map at level " + std::to_string(l));
    if (trace) {
      trace->t = st.t;
      trace->level_inputs.assign(std::size_t(L), {});
    }

    std::vector<Var<S>> preds(static_cast<std::size_t>(L));
    for (int l = L - 1; l >= 0; --l) {
      auto& ls = st.levels[std::size_t(l)];
      std::vector<Var<S>> inputs;
      inputs.push_back(ls.error);
      if (trace) trace->level_inputs[std::size_t(l)].push_back({"E_local", tensor_hash(ls.error.value())});
      if (l > 0) {
        Var<S> lower = downsample2(st.levels[std::size_t(l - 1)].error, cfg_.downsample);
        inputs.push_back(lower);
        if (trace) trace->level_inputs[std::size_t(l)].push_back({"E_lower", tensor_hash(lower.value())});
      }
      const Var<S>* higher_code = nullptr;
      if (l < L - 1) {
        const auto& above = st.levels[std::size_t(l + 1)];
        Var<S> up = upsample_nearest2(above.pred);
        inputs.push_back(up);
        higher_code = &above.code;
        if (trace) {
          trace->level_inputs[std::size_t(l)].push_back({"P_higher", tensor_hash(up.value())});
          trace->level_inputs[std::size_t(l)].push_back({"v_higher", tensor_hash(above.code.value())});
        }
      }
      auto out = cells_[std::size_t(l)].step(inputs, ls.cell, higher_code);
      ls.cell = out.state;
      ls.pred = out.prediction;
      ls.code = out.code;
      preds[std::size_t(l)] = out.prediction;
    }
    st.awaiting_bottom_up = true;
    return preds;
  }

  // Bottom-up pass: updates every level's error map against the target pyramid.
  // `frame` present: teacher path (pyramid of the ground-truth frame).
  // `frame` null: predicted-feedback path (pyramid of the level-0 prediction, so
  // the level-0 error is identically zero).
  std::vector<Var<S>> step_bottom_up(NetworkState<S>& st, const Tensor<S>* frame) const {
    const int L = cfg_.levels;
    if (!st.awaiting_bottom_up)
      throw ContractViolation("step_bottom_up: no predictions pending (run step_top_down first)");
    std::vector<Var<S>> targets;
    if (frame) {
      if (frame->n != st.batch || frame->c != 3 || frame->h != st.height || frame->w != st.width)
        throw DimensionError("step_bottom_up: frame " + frame->shape_str() + " does not match network input");
      FramePyramid<S> pyr = build_pyramid(*frame, L, cfg_.downsample);
      for (int l = 0; l < L; ++l) targets.push_back(Var<S>::constant(pyr.levels[std::size_t(l)]));
    } else {
      targets = build_pyramid_var(st.levels[0].pred, L, cfg_.downsample);
    }
    std::vector<Var<S>> errors(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
      auto& ls = st.levels[std::size_t(l)];
      ls.error = compute_error(targets[std::size_t(l)], ls.pred);
      ls.error_t = st.t;
      errors[std::size_t(l)] = ls.error;
    }
    st.awaiting_bottom_up = false;
    st.t += 1;
    return errors;
  }

  struct Rollout {
    std::vector<Var<S>> horizon_preds;              // level-0 predictions for the last `horizon` steps
    std::vector<std::vector<Var<S>>> level_preds;   // [t][l], every step
    std::vector<FramePyramid<S>> target_pyramids;   // [t], ground-truth pyramids where frames exist
    int context = 0, horizon = 0;
    int feedback_steps = 0;                         // bottom-up passes fed from predictions
  };

  // First `context` steps always consume ground truth; later steps consume
  // ground truth (teacher_forced) or fed-back predictions. Loss targets are
  // ground-truth pyramids at every step where a frame exists.
  Rollout rollout(const std::vector<Tensor<S>>& frames, int context, int horizon, RolloutMode mode,
                  std::vector<StepTrace>* traces = nullptr) const {
    if (frames.empty()) throw InputError("rollout: no frames");
    if (context < 0 || horizon < 0) throw InputError("rollout: negative context/horizon");
    if (int(frames.size()) < context)
      throw InputError("rollout: need at least " + std::to_string(context) + " frames, got " +
                       std::to_string(frames.size()));
    const int total = context + horizon;
    if (mode == RolloutMode::teacher_forced && int(frames.size()) < total)
      throw InputError("rollout: teacher_forced horizon exceeds available ground truth (" +
                       std::to_string(frames.size()) + " frames, need " + std::to_string(total) + ")");

    const auto& f0 = frames.front();
    NetworkState<S> st = initial_state(f0.n, f0.h, f0.w, mode);
    Rollout out;
    out.context = context;
    out.horizon = horizon;
    out.level_preds.reserve(std::size_t(total));
    for (int t = 0; t < total; ++t) {
      StepTrace* tr = nullptr;
      if (traces) {
        traces->emplace_back();
        tr = &traces->back();
      }
      auto preds = step_top_down(st, tr);
      if (t >= context) out.horizon_preds.push_back(preds[0]);
      if (t < int(frames.size()))
        out.target_pyramids.push_back(build_pyramid(frames[std::size_t(t)], cfg_.levels, cfg_.downsample));
      out.level_preds.push_back(std::move(preds));
      const bool teacher = (t < context) || (mode == RolloutMode::teacher_forced);
      if (teacher) {
        step_bottom_up(st, &frames[std::size_t(t)]);
      } else {
        step_bottom_up(st, nullptr);
        out.feedback_steps += 1;
      }
    }
    return out;
  }

  ParamList<S> parameters() const {
    ParamList<S> out;
    for (int l = 0; l < cfg_.levels; ++l)
      cells_[std::size_t(l)].collect_params("level" + std::to_string(l), out);
    return out;
  }

 private:
  ModelConfig cfg_;
  std::vector<EDLSTMCell<S>> cells_;
};

}  // namespace mspn
