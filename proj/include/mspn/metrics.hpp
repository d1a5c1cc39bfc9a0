// Quantitative evaluation: windowed SSIM, PSNR, per-frame and horizon-averaged
// MSE, the copy-last-frame reference baseline, and the evaluation report.
//
// Conventions (stated here because reported numbers depend on them): pixels live in
// [0,1] so MAX = 1; MSE is the mean over all pixels of the frame; SSIM uses an
// 11x11 Gaussian window (sigma 1.5) over valid window placements, averaged over
// windows and channels; per-step values average over frames first, horizon
// means average the per-step values.
#pragma once

#include <functional>
#include <json.hpp>
#include <limits>
#include <optional>

#include "mspn/data.hpp"
#include "mspn/network.hpp"

namespace mspn {

inline double mse(const Tensor<double>& x, const Tensor<double>& y) {
  require_same_shape(x, y, "mse");
  return (x.data - y.data).square().sum() / double(x.size());
}

// PSNR = 10 log10(MAX^2 / MSE); identical images return the infinity sentinel.
inline double psnr(const Tensor<double>& x, const Tensor<double>& y) {
  const double m = mse(x, y);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

namespace detail {
inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> k(std::size_t(size) * size);
  const int half = size / 2;
  double sum = 0.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dy = y - half, dx = x - half;
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k[std::size_t(y) * size + x] = v;
      sum += v;
    }
  for (auto& v : k) v /= sum;
  return k;
}
}  // namespace detail

// SSIM(x,y) = (2 mu_x mu_y + c1)(2 sigma_xy + c2) /
//             ((mu_x^2 + mu_y^2 + c1)(sigma_x^2 + sigma_y^2 + c2))
// with c1 = (0.01 MAX)^2, c2 = (0.03 MAX)^2. Windows shrink (odd, sigma scaled)
// when the image is smaller than 11 pixels on a side.
inline double ssim(const Tensor<double>& x, const Tensor<double>& y) {
  require_same_shape(x, y, "ssim");
  if (x.n != 1) throw DimensionError("ssim: expects single images, got batch " + x.shape_str());
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  int win = 11;
  const int mindim = std::min(x.h, x.w);
  if (mindim < win) win = mindim % 2 == 1 ? mindim : mindim - 1;
  if (win < 1) throw DimensionError("ssim: image too small");
  const double sigma = 1.5 * double(win) / 11.0;
  const auto kernel = detail::gaussian_window(win, sigma);

  double total = 0.0;
  std::int64_t count = 0;
  for (int ch = 0; ch < x.c; ++ch) {
    const double* px = x.plane(0, ch);
    const double* py = y.plane(0, ch);
    for (int wy = 0; wy + win <= x.h; ++wy)
      for (int wx = 0; wx + win <= x.w; ++wx) {
        // products are formed before the weighted accumulation so that FMA
        // contraction cannot break the exact symmetry/identity properties
        double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
        for (int ky = 0; ky < win; ++ky) {
          const double* rx = px + std::int64_t(wy + ky) * x.w + wx;
          const double* ry = py + std::int64_t(wy + ky) * x.w + wx;
          const double* kw = kernel.data() + std::size_t(ky) * win;
          for (int kx = 0; kx < win; ++kx) {
            const double a = rx[kx], b = ry[kx], wgt = kw[kx];
            const double aa = a * a, bb = b * b, ab = a * b;
            mx += wgt * a;
            my += wgt * b;
            mxx += wgt * aa;
            myy += wgt * bb;
            mxy += wgt * ab;
          }
        }
        const double mx2 = mx * mx, my2 = my * my, mxy2 = mx * my;
        const double vxx = mxx - mx2;
        const double vyy = myy - my2;
        const double vxy = mxy - mxy2;
        const double num = (2.0 * mxy2 + c1) * (2.0 * vxy + c2);
        const double den = (mx2 + my2 + c1) * (vxx + vyy + c2);
        total += num / den;
        ++count;
      }
  }
  return total / double(count);
}

// ---------------------------------------------------------------------------
// Evaluation protocol

struct MetricProtocol {
  int context = 10;
  int horizon = 10;
  int batch = 8;  // rollouts are batched for throughput; results are per-sequence
};

// optional external perceptual metric: f(prediction, target) -> value
using ExternalMetric = std::function<double(const Tensor<double>&, const Tensor<double>&)>;

struct MetricReport {
  int version = 1;
  std::uint64_t config_fingerprint = 0;
  int context = 0, horizon = 0, sequences = 0;

  struct Step {
    int step = 0;  // 1-based horizon index
    double ssim = 0, mse = 0;
    double psnr = 0;          // mean over finite values
    int psnr_inf_count = 0;   // frames hitting the infinity sentinel
    double baseline_ssim = 0, baseline_mse = 0;
    std::optional<double> external;
  };
  std::vector<Step> steps;

  double mean_ssim = 0, mean_mse = 0, mean_psnr = 0;
  int psnr_inf_total = 0;
  double baseline_mean_ssim = 0, baseline_mean_mse = 0;
  std::optional<double> external_mean;

  nlohmann::json summary_json() const {
    nlohmann::json j{{"kind", "summary"},           {"version", version},
                     {"config_fingerprint", config_fingerprint},
                     {"context", context},          {"horizon", horizon},
                     {"sequences", sequences},      {"frames_per_step", sequences},
                     {"total_frames", sequences * horizon},
                     {"mean_ssim", mean_ssim},
                     {"mean_mse", mean_mse},        {"mean_psnr", mean_psnr},
                     {"psnr_inf_total", psnr_inf_total},
                     {"baseline_mean_ssim", baseline_mean_ssim},
                     {"baseline_mean_mse", baseline_mean_mse}};
    if (external_mean) j["external_mean"] = *external_mean;
    return j;
  }

  nlohmann::json step_json(const Step& s) const {
    nlohmann::json j{{"kind", "step"},   {"step", s.step},
                     {"ssim", s.ssim},   {"mse", s.mse},
                     {"psnr", s.psnr},   {"psnr_inf_count", s.psnr_inf_count},
                     {"baseline_ssim", s.baseline_ssim},
                     {"baseline_mse", s.baseline_mse}};
    if (s.external) j["external"] = *s.external;
    return j;
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw InputError("report: cannot open " + path.string());
    for (const auto& s : steps) f << step_json(s).dump() << "\n";
    f << summary_json().dump() << "\n";
  }
};

namespace detail {
template <class S>
Tensor<double> sample_as_double(const Tensor<S>& batch, int b, bool clamp_unit) {
  Tensor<double> out(1, batch.c, batch.h, batch.w);
  const S* src = batch.plane(b, 0);
  for (std::int64_t i = 0; i < out.size(); ++i) {
    double v = double(src[i]);
    if (clamp_unit) v = std::min(1.0, std::max(0.0, v));
    out.data[i] = v;
  }
  return out;
}
}  // namespace detail

// Predicted-feedback rollouts over a dataset; per-step and horizon-mean SSIM /
// PSNR / MSE plus the copy-last-frame baseline. `limit` > 0 evaluates only the
// first `limit` sequences.
template <class S>
MetricReport evaluate(const MSPN<S>& model, const SequenceDataset& ds, const MetricProtocol& proto,
                      std::uint64_t config_fingerprint = 0, const ExternalMetric& external = nullptr,
                      int limit = 0) {
  if (ds.seq_len() < proto.context + proto.horizon)
    throw InputError("evaluate: dataset sequences of length " + std::to_string(ds.seq_len()) +
                     " cannot cover context+horizon");
  const int n_seq = limit > 0 ? std::min(limit, ds.size()) : ds.size();
  if (n_seq == 0) throw InputError("evaluate: empty dataset");

  MetricReport rep;
  rep.config_fingerprint = config_fingerprint;
  rep.context = proto.context;
  rep.horizon = proto.horizon;
  rep.sequences = n_seq;
  rep.steps.resize(std::size_t(proto.horizon));
  for (int j = 0; j < proto.horizon; ++j) rep.steps[std::size_t(j)].step = j + 1;
  std::vector<double> psnr_fin_sum(std::size_t(proto.horizon), 0.0);
  std::vector<int> psnr_fin_cnt(std::size_t(proto.horizon), 0);
  std::vector<double> ext_sum(std::size_t(proto.horizon), 0.0);

  NoGradGuard ng;
  for (int begin = 0; begin < n_seq; begin += proto.batch) {
    const int bn = std::min(proto.batch, n_seq - begin);
    std::vector<int> idx(static_cast<std::size_t>(bn));
    for (int i = 0; i < bn; ++i) idx[std::size_t(i)] = begin + i;
    auto frames = stack_sequences<S>(ds, idx);
    auto roll = model.rollout(frames, proto.context, proto.horizon, RolloutMode::predicted_feedback);
    for (int j = 0; j < proto.horizon; ++j) {
      auto& st = rep.steps[std::size_t(j)];
      const Tensor<S>& pred_batch = roll.horizon_preds[std::size_t(j)].value();
      const Tensor<S>& gt_batch = frames[std::size_t(proto.context + j)];
      const Tensor<S>& last_ctx = frames[std::size_t(proto.context - 1)];
      for (int b = 0; b < bn; ++b) {
        const auto pred = detail::sample_as_double(pred_batch, b, true);
        const auto gt = detail::sample_as_double(gt_batch, b, false);
        const auto base = detail::sample_as_double(last_ctx, b, false);
        st.ssim += ssim(pred, gt);
        st.mse += mse(pred, gt);
        const double p = psnr(pred, gt);
        if (std::isfinite(p)) {
          psnr_fin_sum[std::size_t(j)] += p;
          psnr_fin_cnt[std::size_t(j)] += 1;
        } else {
          st.psnr_inf_count += 1;
        }
        st.baseline_ssim += ssim(base, gt);
        st.baseline_mse += mse(base, gt);
        if (external) ext_sum[std::size_t(j)] += external(pred, gt);
      }
    }
  }

  double sum_ssim = 0, sum_mse = 0, sum_psnr = 0, base_ssim = 0, base_mse = 0, sum_ext = 0;
  int psnr_steps = 0;
  for (int j = 0; j < proto.horizon; ++j) {
    auto& st = rep.steps[std::size_t(j)];
    st.ssim /= n_seq;
    st.mse /= n_seq;
    st.baseline_ssim /= n_seq;
    st.baseline_mse /= n_seq;
    if (psnr_fin_cnt[std::size_t(j)] > 0) {
      st.psnr = psnr_fin_sum[std::size_t(j)] / psnr_fin_cnt[std::size_t(j)];
      sum_psnr += st.psnr;
      ++psnr_steps;
    } else {
      st.psnr = std::numeric_limits<double>::quiet_NaN();
    }
    rep.psnr_inf_total += st.psnr_inf_count;
    if (external) {
      st.external = ext_sum[std::size_t(j)] / n_seq;
      sum_ext += *st.external;
    }
    sum_ssim += st.ssim;
    sum_mse += st.mse;
    base_ssim += st.baseline_ssim;
    base_mse += st.baseline_mse;
  }
  rep.mean_ssim = sum_ssim / proto.horizon;
  rep.mean_mse = sum_mse / proto.horizon;
  rep.mean_psnr = psnr_steps > 0 ? sum_psnr / psnr_steps : std::numeric_limits<double>::quiet_NaN();
  rep.baseline_mean_ssim = base_ssim / proto.horizon;
  rep.baseline_mean_mse = base_mse / proto.horizon;
  if (external) rep.external_mean = sum_ext / proto.horizon;
  return rep;
}

}  // namespace mspn
