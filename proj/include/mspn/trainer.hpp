// Training loop: tolerance-gated discriminator/generator alternation with a
// score window keeping the discriminator only slightly ahead, a pixel-only
// mode, and a long-term curriculum that switches rollouts to predicted
// feedback for the second half of training.
//
// Phase mechanics, shared with the scripted-score tests through run_phase():
// each inner iteration measures scores on the next minibatch, updates the
// smoothed real score and its tolerances (c1 = |R|/100, c2 = |R|/50), exits
// when the window condition holds (D: P < R - c1, G: P > R - c2), trips a
// guard after `guard` updates, and otherwise applies one optimizer step.
// Checking before the update means a pre-satisfied condition costs zero steps.
#pragma once

#include <chrono>
#include <cmath>
#include <optional>

#include "mspn/checkpoint.hpp"
#include "mspn/config.hpp"
#include "mspn/discriminator.hpp"
#include "mspn/metrics.hpp"
#include "mspn/objectives.hpp"

namespace mspn {

enum class Phase { discriminator, generator };

inline const char* to_string(Phase p) { return p == Phase::discriminator ? "D" : "G"; }

// Exponential moving average of the batch-mean real score; the tolerance
// window is derived from it so single-batch noise cannot thrash the phases.
// decay = 0 reproduces the raw per-batch score.
class ToleranceState {
 public:
  explicit ToleranceState(double decay = 0.9) : decay_(decay) {}
  void observe(double real_score) {
    ema_ = initialized_ ? decay_ * ema_ + (1.0 - decay_) * real_score : real_score;
    initialized_ = true;
  }
  double rs() const { return ema_; }
  double c1() const { return std::abs(ema_) / 100.0; }
  double c2() const { return std::abs(ema_) / 50.0; }
  bool initialized() const { return initialized_; }
  double decay() const { return decay_; }
  void restore(double ema, bool initialized) {
    ema_ = ema;
    initialized_ = initialized;
  }

 private:
  double decay_;
  double ema_ = 0.0;
  bool initialized_ = false;
};

struct PhaseScores {
  double rs = 0, ps = 0;
};

struct PhaseExit {
  enum class Reason { condition, guard, stream_end };
  Reason reason = Reason::condition;
  int updates = 0;
  double rs = std::numeric_limits<double>::quiet_NaN();           // raw batch-mean real score
  double rs_smoothed = std::numeric_limits<double>::quiet_NaN();  // EMA driving the window
  double ps = std::numeric_limits<double>::quiet_NaN();
  double c1 = 0, c2 = 0;
};

inline const char* to_string(PhaseExit::Reason r) {
  switch (r) {
    case PhaseExit::Reason::condition: return "condition";
    case PhaseExit::Reason::guard: return "guard";
    default: return "stream_end";
  }
}

// measure(): scores for the next minibatch, or nullopt when the epoch stream
// is exhausted. apply(): one optimizer update for the batch just measured.
template <class MeasureFn, class ApplyFn>
PhaseExit run_phase(Phase phase, ToleranceState& tol, int guard_limit, MeasureFn&& measure, ApplyFn&& apply) {
  PhaseExit exit;
  while (true) {
    std::optional<PhaseScores> s = measure();
    if (!s) {
      exit.reason = PhaseExit::Reason::stream_end;
      return exit;
    }
    tol.observe(s->rs);
    exit.rs = s->rs;
    exit.rs_smoothed = tol.rs();
    exit.ps = s->ps;
    exit.c1 = tol.c1();
    exit.c2 = tol.c2();
    const bool done = phase == Phase::discriminator ? (s->ps < tol.rs() - tol.c1())
                                                    : (s->ps > tol.rs() - tol.c2());
    if (done) {
      exit.reason = PhaseExit::Reason::condition;
      return exit;
    }
    if (exit.updates >= guard_limit) {
      exit.reason = PhaseExit::Reason::guard;
      return exit;
    }
    apply();
    ++exit.updates;
  }
}

// Shuffled minibatch indices for one epoch. The order depends only on
// (seed, epoch), so resuming at an epoch boundary replays identically.
class BatchStream {
 public:
  BatchStream(int dataset_size, int batch_size, Rng rng) : batch_(batch_size) {
    order_.resize(std::size_t(dataset_size));
    for (int i = 0; i < dataset_size; ++i) order_[std::size_t(i)] = i;
    for (std::size_t i = order_.size(); i > 1; --i)
      std::swap(order_[i - 1], order_[std::size_t(rng.next_u64() % i)]);
  }
  std::optional<std::vector<int>> next() {
    if (pos_ >= order_.size()) return std::nullopt;
    const std::size_t n = std::min<std::size_t>(std::size_t(batch_), order_.size() - pos_);
    std::vector<int> out(order_.begin() + std::ptrdiff_t(pos_), order_.begin() + std::ptrdiff_t(pos_ + n));
    pos_ += n;
    return out;
  }
  bool exhausted() const { return pos_ >= order_.size(); }

 private:
  int batch_;
  std::vector<int> order_;
  std::size_t pos_ = 0;
};

template <class S>
class Trainer {
 public:
  struct Stats {
    long condition_switches = 0;
    long guard_trips = 0;
    long stream_end_phases = 0;
    long feedback_steps = 0;  // bottom-up passes fed from predictions during training
    long steps_g = 0, steps_d = 0;
    std::vector<double> eval_mse;   // snapshot series, in order
    std::vector<double> eval_ssim;
  };

  Trainer(const RunConfig& cfg, MSPN<S>& model, const SequenceDataset& train_ds,
          const SequenceDataset& test_ds, std::filesystem::path out_dir)
      : cfg_(cfg),
        model_(model),
        train_ds_(train_ds),
        test_ds_(test_ds),
        out_dir_(std::move(out_dir)),
        rng_(cfg.seed),
        tol_(cfg.train.ema_decay),
        weights_{cfg.model.levels, cfg.train.lambda_adv} {
    std::filesystem::create_directories(out_dir_);
    log_.open(out_dir_ / "train_log.jsonl", std::ios::app);
    params_g_ = model_.parameters();
    opt_g_ = Adam<S>(params_g_, cfg.train.lr_g);
    if (cfg.train.adversarial) {
      DiscriminatorConfig dcfg{3, cfg.train.disc_base, cfg.train.disc_stages,
                               cfg.train.disc_norm ? NormKind::instance : NormKind::none};
      disc_ = Discriminator<S>(dcfg, train_ds.height(), train_ds.width(), cfg.seed ^ 0x5a5a5a5aULL);
      disc_->collect_params("disc", params_d_);
      opt_d_ = Adam<S>(params_d_, cfg.train.lr_d);
    }
  }

  // ---- checkpointing -------------------------------------------------------

  Checkpoint<S> make_checkpoint() {
    Checkpoint<S> ck;
    ck.config_fingerprint = cfg_.fingerprint();
    ck.global_step = std::uint64_t(stats_.steps_g + stats_.steps_d);
    ck.epoch = std::uint32_t(epoch_next_);
    ck.config_json = cfg_.to_json().dump();
    ck.rng_state = rng_.state();
    ck.add_params("model", params_g_);
    ck.add_adam("adam_g", opt_g_);
    if (disc_) {
      ck.add_params("disc", params_d_);
      ck.add_adam("adam_d", opt_d_);
    }
    ck.scalars["ema_rs"] = tol_.rs();
    ck.scalars["ema_init"] = tol_.initialized() ? 1.0 : 0.0;
    ck.scalars["steps_g"] = double(stats_.steps_g);
    ck.scalars["steps_d"] = double(stats_.steps_d);
    return ck;
  }

  void restore(const Checkpoint<S>& ck) {
    if (ck.config_fingerprint != cfg_.fingerprint())
      throw InputError("resume: checkpoint was produced by a different config");
    ck.load_params("model", params_g_);
    ck.load_adam("adam_g", opt_g_);
    if (disc_) {
      ck.load_params("disc", params_d_);
      ck.load_adam("adam_d", opt_d_);
    }
    rng_.set_state(ck.rng_state);
    tol_.restore(ck.scalars.at("ema_rs"), ck.scalars.at("ema_init") != 0.0);
    stats_.steps_g = long(ck.scalars.at("steps_g"));
    stats_.steps_d = long(ck.scalars.at("steps_d"));
    epoch_next_ = int(ck.epoch);
  }

  // ---- phases --------------------------------------------------------------

  RolloutMode epoch_mode(int epoch) const {
    const bool late = epoch >= cfg_.train.epochs / 2;
    return (cfg_.train.long_term && late) ? RolloutMode::predicted_feedback : RolloutMode::teacher_forced;
  }

  PhaseExit train_discriminator_phase(BatchStream& stream, RolloutMode mode) {
    Var<S> cached_loss;
    PhaseScores cached_scores;
    auto measure = [&]() -> std::optional<PhaseScores> {
      auto batch = stream.next();
      if (!batch) return std::nullopt;
      auto frames = stack_sequences<S>(train_ds_, *batch);
      std::vector<Tensor<S>> fakes;
      {
        NoGradGuard ng;  // generator is frozen; fakes are constants
        auto roll = model_.rollout(frames, cfg_.train.context, cfg_.train.horizon, mode);
        stats_.feedback_steps += roll.feedback_steps;
        for (std::size_t t = 1; t < roll.level_preds.size(); ++t)
          fakes.push_back(roll.level_preds[t][0].value());
      }
      Var<S> rs = mean_score_over(frames, 1);
      Var<S> ps = mean_score_over(fakes, 0);
      cached_loss = discriminator_loss(rs, ps);
      check_finite(cached_loss, "discriminator loss");
      cached_scores = {double(scalar_of(rs)), double(scalar_of(ps))};
      return cached_scores;
    };
    auto apply = [&] {
      opt_d_.zero_grad();
      backward(cached_loss);
      opt_d_.step();
      ++stats_.steps_d;
      log_step("D", double(scalar_of(cached_loss)), 0.0, 0.0, &cached_scores);
    };
    PhaseExit e = run_phase(Phase::discriminator, tol_, cfg_.train.guard, measure, apply);
    log_switch("D", e);
    return e;
  }

  PhaseExit train_generator_phase(BatchStream& stream, RolloutMode mode) {
    Var<S> cached_loss;
    double cached_pixel = 0, cached_adv = 0;
    PhaseScores cached_scores;
    auto measure = [&]() -> std::optional<PhaseScores> {
      auto batch = stream.next();
      if (!batch) return std::nullopt;
      auto frames = stack_sequences<S>(train_ds_, *batch);
      auto roll = model_.rollout(frames, cfg_.train.context, cfg_.train.horizon, mode);
      stats_.feedback_steps += roll.feedback_steps;
      Var<S> pixel = pixel_loss(roll.target_pyramids, roll.level_preds, weights_);
      Var<S> ps = Var<S>::constant(Tensor<S>::scalar(S(0)));
      for (std::size_t t = 1; t < roll.level_preds.size(); ++t)
        ps = add(ps, disc_->mean_score(roll.level_preds[t][0]));
      ps = scale(ps, 1.0 / double(roll.level_preds.size() - 1));
      Var<S> adv = generator_adv_loss(ps);
      cached_loss = total_generator_loss(pixel, adv, weights_);
      check_finite(cached_loss, "generator loss");
      cached_pixel = double(scalar_of(pixel));
      cached_adv = double(scalar_of(adv));
      double rs;
      {
        NoGradGuard ng;
        rs = double(scalar_of(mean_score_over(frames, 1)));
      }
      cached_scores = {rs, double(scalar_of(ps))};
      return cached_scores;
    };
    auto apply = [&] {
      opt_g_.zero_grad();
      backward(cached_loss);
      opt_g_.step();
      ++stats_.steps_g;
      log_step("G", double(scalar_of(cached_loss)), cached_pixel, cached_adv, &cached_scores);
      maybe_eval();
    };
    PhaseExit e = run_phase(Phase::generator, tol_, cfg_.train.guard, measure, apply);
    log_switch("G", e);
    return e;
  }

  // ---- top-level loop ------------------------------------------------------

  void train() {
    start_time_ = std::chrono::steady_clock::now();
    stop_requested_ = false;
    for (int epoch = epoch_next_; epoch < cfg_.train.epochs && !stop_requested_; ++epoch) {
      const RolloutMode mode = epoch_mode(epoch);
      BatchStream stream(train_ds_.size(), cfg_.train.batch_size, rng_.fork(std::uint64_t(epoch) + 1));
      if (cfg_.train.adversarial) {
        while (!stream.exhausted() && !stop_requested_) {
          auto ed = train_discriminator_phase(stream, mode);
          bump_switch_stats(ed);
          if (stream.exhausted() || stop_requested_) break;
          auto eg = train_generator_phase(stream, mode);
          bump_switch_stats(eg);
          check_caps();
        }
      } else {
        while (!stop_requested_) {
          auto batch = stream.next();
          if (!batch) break;
          pixel_only_step(*batch, mode);
          check_caps();
        }
      }
      epoch_next_ = epoch + 1;
      if (cfg_.train.checkpoint_every > 0 && (epoch + 1) % cfg_.train.checkpoint_every == 0)
        save_checkpoint();
    }
    save_checkpoint();
    run_eval();  // final snapshot
  }

  const Stats& stats() const { return stats_; }
  const ToleranceState& tolerance() const { return tol_; }
  Discriminator<S>* discriminator() { return disc_ ? &*disc_ : nullptr; }
  const ParamList<S>& generator_params() const { return params_g_; }
  const ParamList<S>& discriminator_params() const { return params_d_; }
  long total_steps() const { return stats_.steps_g + stats_.steps_d; }

  MetricReport run_eval() {
    MetricProtocol proto{cfg_.train.context, cfg_.train.horizon, cfg_.train.eval_batch};
    auto rep = evaluate(model_, test_ds_, proto, cfg_.fingerprint(), nullptr, cfg_.train.eval_sequences);
    stats_.eval_mse.push_back(rep.mean_mse);
    stats_.eval_ssim.push_back(rep.mean_ssim);
    nlohmann::json j{{"kind", "eval"},
                     {"step", total_steps()},
                     {"mean_mse", rep.mean_mse},
                     {"mean_ssim", rep.mean_ssim},
                     {"baseline_mean_ssim", rep.baseline_mean_ssim}};
    log_line(j);
    last_report_ = rep;
    return rep;
  }

  const std::optional<MetricReport>& last_report() const { return last_report_; }

 private:
  void pixel_only_step(const std::vector<int>& batch, RolloutMode mode) {
    auto frames = stack_sequences<S>(train_ds_, batch);
    auto roll = model_.rollout(frames, cfg_.train.context, cfg_.train.horizon, mode);
    stats_.feedback_steps += roll.feedback_steps;
    Var<S> loss = pixel_loss(roll.target_pyramids, roll.level_preds, weights_);
    check_finite(loss, "pixel loss");
    opt_g_.zero_grad();
    backward(loss);
    opt_g_.step();
    ++stats_.steps_g;
    log_step("pix", double(scalar_of(loss)), double(scalar_of(loss)), 0.0);
    maybe_eval();
  }

  // mean discriminator score over a list of (B,3,H,W) batches; each batch
  // holds the same number of frames so the mean of means is the overall mean.
  // skip_first drops the t=0 frame to mirror the fake-frame list.
  Var<S> mean_score_over(const std::vector<Tensor<S>>& frames, std::size_t skip_first) {
    Var<S> acc = Var<S>::constant(Tensor<S>::scalar(S(0)));
    std::size_t count = 0;
    for (std::size_t t = skip_first; t < frames.size(); ++t) {
      acc = add(acc, disc_->mean_score(Var<S>::constant(frames[t])));
      ++count;
    }
    if (count == 0) throw ContractViolation("mean_score_over: no frames");
    return scale(acc, 1.0 / double(count));
  }

  void check_finite(const Var<S>& loss, const char* what) {
    if (!loss.value().all_finite()) {
      auto ck = make_checkpoint();
      ck.save(out_dir_ / "diagnostic.mspnckpt");
      throw NumericError(std::string(what) + " is not finite; diagnostic checkpoint written");
    }
  }

  void bump_switch_stats(const PhaseExit& e) {
    switch (e.reason) {
      case PhaseExit::Reason::condition: ++stats_.condition_switches; break;
      case PhaseExit::Reason::guard: ++stats_.guard_trips; break;
      case PhaseExit::Reason::stream_end: ++stats_.stream_end_phases; break;
    }
  }

  void check_caps() {
    if (cfg_.train.max_steps > 0 && total_steps() >= cfg_.train.max_steps) stop_requested_ = true;
    if (cfg_.train.max_seconds > 0) {
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time_).count();
      if (elapsed >= cfg_.train.max_seconds) stop_requested_ = true;
    }
  }

  void maybe_eval() {
    if (cfg_.train.eval_every > 0 && total_steps() % cfg_.train.eval_every == 0) run_eval();
  }

  void save_checkpoint() {
    auto ck = make_checkpoint();
    char name[48];
    std::snprintf(name, sizeof(name), "ckpt_epoch_%04d.mspnckpt", epoch_next_);
    ck.save(out_dir_ / name);
    ck.save(out_dir_ / "latest.mspnckpt");
  }

  void log_step(const char* phase, double loss, double pixel, double adv,
                const PhaseScores* scores = nullptr) {
    nlohmann::json j{{"kind", "step"}, {"step", total_steps()}, {"phase", phase},
                     {"loss", loss},   {"pixel", pixel},        {"adv", adv}};
    if (scores) {
      j["rs"] = scores->rs;
      j["ps"] = scores->ps;
      j["rs_smoothed"] = tol_.rs();
    }
    log_line(j);
  }

  void log_switch(const char* phase, const PhaseExit& e) {
    nlohmann::json j{{"kind", "switch"}, {"phase", phase}, {"reason", to_string(e.reason)},
                     {"updates", e.updates}};
    if (std::isfinite(e.rs)) {
      j["rs"] = e.rs;
      j["rs_smoothed"] = e.rs_smoothed;
      j["ps"] = e.ps;
      j["c1"] = e.c1;
      j["c2"] = e.c2;
    }
    if (e.reason == PhaseExit::Reason::guard)
      j["warning"] = std::string("phase stalled: force-switched after ") + std::to_string(e.updates) +
                     " updates without reaching the exit condition";
    log_line(j);
  }

  void log_line(const nlohmann::json& j) {
    if (log_) log_ << j.dump() << "\n" << std::flush;
  }

  RunConfig cfg_;
  MSPN<S>& model_;
  const SequenceDataset& train_ds_;
  const SequenceDataset& test_ds_;
  std::filesystem::path out_dir_;
  std::ofstream log_;
  Rng rng_;
  ToleranceState tol_;
  LossWeights weights_;
  ParamList<S> params_g_, params_d_;
  Adam<S> opt_g_, opt_d_;
  std::optional<Discriminator<S>> disc_;
  Stats stats_;
  std::optional<MetricReport> last_report_;
  int epoch_next_ = 0;
  bool stop_requested_ = false;
  std::chrono::steady_clock::time_point start_time_{};
};

}  // namespace mspn
