// Differentiable building blocks: conv2d (im2col + Eigen GEMM), 2x pooling and
// upsampling, activations, channel concat/slice, reductions, scalar arithmetic,
// plus the Conv2d layer wrapper and the Adam optimizer.
#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mspn/autograd.hpp"
#include "mspn/rng.hpp"
#include "mspn/tensor.hpp"

namespace mspn {

template <class S>
using ParamList = std::vector<std::pair<std::string, Var<S>>>;

namespace detail {

template <class S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapRM = Eigen::Map<MatRM<S>>;
template <class S>
using CMapRM = Eigen::Map<const MatRM<S>>;
template <class S>
using VecMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>;
template <class S>
using CVecMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>;

template <class S>
std::vector<S>& conv_scratch(int which) {
  thread_local std::vector<S> buf[2];
  return buf[which];
}

// Patch matrix for one sample: (Ci*K*K) x (OH*OW), row-major.
template <class S>
void im2col(const Tensor<S>& x, int in, int K, int stride, int pad, int oh, int ow, S* cols) {
  const int ci_n = x.c, H = x.h, W = x.w;
  const int ohw = oh * ow;
  for (int ci = 0; ci < ci_n; ++ci) {
    const S* src = x.plane(in, ci);
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        S* row = cols + (std::int64_t(ci) * K * K + ky * K + kx) * ohw;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          S* dst = row + oy * ow;
          if (iy < 0 || iy >= H) {
            for (int ox = 0; ox < ow; ++ox) dst[ox] = S(0);
            continue;
          }
          const S* line = src + std::int64_t(iy) * W;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < W) ? line[ix] : S(0);
          }
        }
      }
    }
  }
}

template <class S>
void col2im_add(const S* cols, int ci_n, int K, int stride, int pad, int oh, int ow, Tensor<S>& dx, int in) {
  const int H = dx.h, W = dx.w;
  const int ohw = oh * ow;
  for (int ci = 0; ci < ci_n; ++ci) {
    S* dst = dx.plane(in, ci);
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        const S* row = cols + (std::int64_t(ci) * K * K + ky * K + kx) * ohw;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          S* line = dst + std::int64_t(iy) * W;
          const S* grow = row + oy * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) line[ix] += grow[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution

template <class S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int stride, int pad) {
  const Tensor<S>& xv = x.value();
  const Tensor<S>& wv = w.value();
  const int K = wv.h;
  if (wv.w != K) throw DimensionError("conv2d: non-square kernel");
  if (xv.c != wv.c)
    throw DimensionError("conv2d: input channels " + std::to_string(xv.c) + " != weight channels " +
                         std::to_string(wv.c));
  const int co = wv.n;
  if (b.value().c != co || b.value().size() != co) throw DimensionError("conv2d: bias shape");
  const int oh = (xv.h + 2 * pad - K) / stride + 1;
  const int ow = (xv.w + 2 * pad - K) / stride + 1;
  if (oh < 1 || ow < 1) throw DimensionError("conv2d: output would be empty for input " + xv.shape_str());

  const int ckk = xv.c * K * K;
  const int ohw = oh * ow;
  auto& cols = detail::conv_scratch<S>(0);
  cols.resize(std::size_t(ckk) * ohw);

  Tensor<S> out(xv.n, co, oh, ow);
  detail::CMapRM<S> wm(wv.ptr(), co, ckk);
  detail::CVecMap<S> bv(b.value().ptr(), co);
  for (int in = 0; in < xv.n; ++in) {
    detail::im2col(xv, in, K, stride, pad, oh, ow, cols.data());
    detail::CMapRM<S> cm(cols.data(), ckk, ohw);
    detail::MapRM<S> ym(out.plane(in, 0), co, ohw);
    ym.noalias() = wm * cm;
    ym.colwise() += bv;
  }

  return make_op<S>(
      "conv2d", std::move(out), {x, w, b},
      [K, stride, pad, oh, ow](Node<S>& node) {
        auto& xn = *node.parents[0];
        auto& wn = *node.parents[1];
        auto& bn = *node.parents[2];
        const Tensor<S>& xv = xn.value;
        const Tensor<S>& wv = wn.value;
        const int co = wv.n, ckk = xv.c * K * K, ohw = oh * ow;
        auto& cols = detail::conv_scratch<S>(0);
        auto& colsg = detail::conv_scratch<S>(1);
        cols.resize(std::size_t(ckk) * ohw);
        detail::CMapRM<S> wm(wv.ptr(), co, ckk);
        if (wn.requires_grad) wn.ensure_grad();
        if (bn.requires_grad) bn.ensure_grad();
        if (xn.requires_grad) {
          xn.ensure_grad();
          colsg.resize(std::size_t(ckk) * ohw);
        }
        for (int in = 0; in < xv.n; ++in) {
          detail::CMapRM<S> gm(node.grad.plane(in, 0), co, ohw);
          if (wn.requires_grad || xn.requires_grad)
            detail::im2col(xv, in, K, stride, pad, oh, ow, cols.data());
          if (wn.requires_grad) {
            detail::CMapRM<S> cm(cols.data(), ckk, ohw);
            detail::MapRM<S> dwm(wn.grad.ptr(), co, ckk);
            dwm.noalias() += gm * cm.transpose();
          }
          if (bn.requires_grad) {
            detail::VecMap<S> dbv(bn.grad.ptr(), co);
            dbv.noalias() += gm.rowwise().sum();
          }
          if (xn.requires_grad) {
            detail::MapRM<S> cgm(colsg.data(), ckk, ohw);
            cgm.noalias() = wm.transpose() * gm;
            detail::col2im_add(colsg.data(), xv.c, K, stride, pad, oh, ow, xn.grad, in);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Resampling

template <class S>
Var<S> avg_pool2(const Var<S>& x) {
  const Tensor<S>& xv = x.value();
  if (xv.h % 2 != 0 || xv.w % 2 != 0)
    throw DimensionError("avg_pool2: odd spatial size " + xv.shape_str());
  const int oh = xv.h / 2, ow = xv.w / 2;
  Tensor<S> out(xv.n, xv.c, oh, ow);
  for (int in = 0; in < xv.n; ++in)
    for (int ic = 0; ic < xv.c; ++ic) {
      const S* src = xv.plane(in, ic);
      S* dst = out.plane(in, ic);
      for (int oy = 0; oy < oh; ++oy) {
        const S* r0 = src + (2 * oy) * xv.w;
        const S* r1 = r0 + xv.w;
        for (int ox = 0; ox < ow; ++ox)
          dst[oy * ow + ox] = (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]) * S(0.25);
      }
    }
  return make_op<S>("avg_pool2", std::move(out), {x}, [oh, ow](Node<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    const int W = xn.value.w;
    for (int in = 0; in < xn.value.n; ++in)
      for (int ic = 0; ic < xn.value.c; ++ic) {
        const S* g = node.grad.plane(in, ic);
        S* dx = xn.grad.plane(in, ic);
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            const S q = g[oy * ow + ox] * S(0.25);
            dx[(2 * oy) * W + 2 * ox] += q;
            dx[(2 * oy) * W + 2 * ox + 1] += q;
            dx[(2 * oy + 1) * W + 2 * ox] += q;
            dx[(2 * oy + 1) * W + 2 * ox + 1] += q;
          }
      }
  });
}

// Interval sampling: keep the top-left pixel of each 2x2 block.
template <class S>
Var<S> subsample2(const Var<S>& x) {
  const Tensor<S>& xv = x.value();
  if (xv.h % 2 != 0 || xv.w % 2 != 0)
    throw DimensionError("subsample2: odd spatial size " + xv.shape_str());
  const int oh = xv.h / 2, ow = xv.w / 2;
  Tensor<S> out(xv.n, xv.c, oh, ow);
  for (int in = 0; in < xv.n; ++in)
    for (int ic = 0; ic < xv.c; ++ic) {
      const S* src = xv.plane(in, ic);
      S* dst = out.plane(in, ic);
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = src[(2 * oy) * xv.w + 2 * ox];
    }
  return make_op<S>("subsample2", std::move(out), {x}, [oh, ow](Node<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    const int W = xn.value.w;
    for (int in = 0; in < xn.value.n; ++in)
      for (int ic = 0; ic < xn.value.c; ++ic) {
        const S* g = node.grad.plane(in, ic);
        S* dx = xn.grad.plane(in, ic);
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) dx[(2 * oy) * W + 2 * ox] += g[oy * ow + ox];
      }
  });
}

template <class S>
Var<S> upsample_nearest2(const Var<S>& x) {
  const Tensor<S>& xv = x.value();
  const int oh = xv.h * 2, ow = xv.w * 2;
  Tensor<S> out(xv.n, xv.c, oh, ow);
  for (int in = 0; in < xv.n; ++in)
    for (int ic = 0; ic < xv.c; ++ic) {
      const S* src = xv.plane(in, ic);
      S* dst = out.plane(in, ic);
      for (int oy = 0; oy < oh; ++oy) {
        const S* line = src + (oy / 2) * xv.w;
        for (int ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = line[ox / 2];
      }
    }
  return make_op<S>("upsample_nearest2", std::move(out), {x}, [oh, ow](Node<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    const int W = xn.value.w;
    for (int in = 0; in < xn.value.n; ++in)
      for (int ic = 0; ic < xn.value.c; ++ic) {
        const S* g = node.grad.plane(in, ic);
        S* dx = xn.grad.plane(in, ic);
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) dx[(oy / 2) * W + ox / 2] += g[oy * ow + ox];
      }
  });
}

// ---------------------------------------------------------------------------
// Activations

template <class S>
Var<S> relu(const Var<S>& x) {
  Tensor<S> out = x.value();
  out.data = out.data.max(S(0));
  return make_op<S>("relu", std::move(out), {x}, [](Node<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.data += node.grad.data * (xn.value.data > S(0)).template cast<S>();
  });
}

template <class S>
Var<S> sigmoid(const Var<S>& x) {
  Tensor<S> out = x.value();
  out.data = S(1) / (S(1) + (-out.data).exp());
  return make_op<S>("sigmoid", std::move(out), {x}, [](Node<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.data += node.grad.data * node.value.data * (S(1) - node.value.data);
  });
}

template <class S>
Var<S> tanh(const Var<S>& x) {
  Tensor<S> out = x.value();
  out.data = out.data.tanh();
  return make_op<S>("tanh", std::move(out), {x}, [](Node<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.data += node.grad.data * (S(1) - node.value.data.square());
  });
}

enum class NormKind { none, instance };

inline const char* to_string(NormKind k) { return k == NormKind::none ? "none" : "instance"; }

// Per-sample, per-channel standardization over the spatial plane (no affine
// parameters). Off by default everywhere; exposed as the normalization
// ablation hook for the codec and the score head.
template <class S>
Var<S> instance_norm(const Var<S>& x, double eps = 1e-5) {
  const Tensor<S>& xv = x.value();
  const std::int64_t plane = std::int64_t(xv.h) * xv.w;
  if (plane < 2) throw DimensionError("instance_norm: spatial plane too small " + xv.shape_str());
  Tensor<S> out(xv.n, xv.c, xv.h, xv.w);
  Tensor<S> inv_sigma(xv.n, xv.c, 1, 1);
  for (int in = 0; in < xv.n; ++in)
    for (int ic = 0; ic < xv.c; ++ic) {
      detail::CVecMap<S> p(xv.plane(in, ic), plane);
      const S mu = p.mean();
      const S var = (p.array() - mu).square().mean();
      const S is = S(1) / std::sqrt(var + S(eps));
      inv_sigma.at(in, ic, 0, 0) = is;
      detail::VecMap<S> o(out.plane(in, ic), plane);
      o.array() = (p.array() - mu) * is;
    }
  return make_op<S>("instance_norm", std::move(out), {x}, [plane, inv_sigma](Node<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    for (int in = 0; in < node.value.n; ++in)
      for (int ic = 0; ic < node.value.c; ++ic) {
        detail::CVecMap<S> g(node.grad.plane(in, ic), plane);
        detail::CVecMap<S> y(node.value.plane(in, ic), plane);
        detail::VecMap<S> dx(xn.grad.plane(in, ic), plane);
        const S is = inv_sigma.at(in, ic, 0, 0);
        const S gm = g.mean();
        const S gym = (g.array() * y.array()).mean();
        dx.array() += is * (g.array() - gm - y.array() * gym);
      }
  });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor<S> out = a.value();
  out.data += b.value().data;
  return make_op<S>("add", std::move(out), {a, b}, [](Node<S>& node) {
    for (int i = 0; i < 2; ++i) {
      auto& p = *node.parents[i];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      p.grad.data += node.grad.data;
    }
  });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<S> out = a.value();
  out.data -= b.value().data;
  return make_op<S>("sub", std::move(out), {a, b}, [](Node<S>& node) {
    auto& an = *node.parents[0];
    auto& bn = *node.parents[1];
    if (an.requires_grad) {
      an.ensure_grad();
      an.grad.data += node.grad.data;
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      bn.grad.data -= node.grad.data;
    }
  });
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<S> out = a.value();
  out.data *= b.value().data;
  return make_op<S>("mul", std::move(out), {a, b}, [](Node<S>& node) {
    auto& an = *node.parents[0];
    auto& bn = *node.parents[1];
    if (an.requires_grad) {
      an.ensure_grad();
      an.grad.data += node.grad.data * bn.value.data;
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      bn.grad.data += node.grad.data * an.value.data;
    }
  });
}

template <class S>
Var<S> scale(const Var<S>& x, double k) {
  Tensor<S> out = x.value();
  out.data *= S(k);
  return make_op<S>("scale", std::move(out), {x}, [k](Node<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.data += node.grad.data * S(k);
  });
}

template <class S>
Var<S> add_const(const Var<S>& x, double k) {
  Tensor<S> out = x.value();
  out.data += S(k);
  return make_op<S>("add_const", std::move(out), {x}, [](Node<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.data += node.grad.data;
  });
}

// ---------------------------------------------------------------------------
// Channel concat / slice

template <class S>
Var<S> concat_ch(const std::vector<Var<S>>& xs) {
  if (xs.empty()) throw ContractViolation("concat_ch: no inputs");
  const auto& first = xs.front().value();
  int ctot = 0;
  for (const auto& x : xs) {
    const auto& v = x.value();
    if (v.n != first.n || v.h != first.h || v.w != first.w)
      throw DimensionError("concat_ch: mismatched map shape " + v.shape_str() + " vs " + first.shape_str());
    ctot += v.c;
  }
  Tensor<S> out(first.n, ctot, first.h, first.w);
  const std::int64_t plane = std::int64_t(first.h) * first.w;
  for (int in = 0; in < first.n; ++in) {
    int coff = 0;
    for (const auto& x : xs) {
      const auto& v = x.value();
      std::copy_n(v.plane(in, 0), v.c * plane, out.plane(in, coff));
      coff += v.c;
    }
  }
  return make_op<S>("concat_ch", std::move(out), xs, [plane](Node<S>& node) {
    for (int in = 0; in < node.value.n; ++in) {
      int coff = 0;
      for (auto& pp : node.parents) {
        auto& p = *pp;
        if (p.requires_grad) {
          p.ensure_grad();
          detail::CVecMap<S> g(node.grad.plane(in, coff), p.value.c * plane);
          detail::VecMap<S> dst(p.grad.plane(in, 0), p.value.c * plane);
          dst += g;
        }
        coff += p.value.c;
      }
    }
  });
}

template <class S>
Var<S> slice_ch(const Var<S>& x, int c0, int count) {
  const Tensor<S>& xv = x.value();
  if (c0 < 0 || count < 1 || c0 + count > xv.c) throw DimensionError("slice_ch: range out of bounds");
  Tensor<S> out(xv.n, count, xv.h, xv.w);
  const std::int64_t plane = std::int64_t(xv.h) * xv.w;
  for (int in = 0; in < xv.n; ++in) std::copy_n(xv.plane(in, c0), count * plane, out.plane(in, 0));
  return make_op<S>("slice_ch", std::move(out), {x}, [c0, count, plane](Node<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    for (int in = 0; in < xn.value.n; ++in) {
      detail::CVecMap<S> g(node.grad.plane(in, 0), count * plane);
      detail::VecMap<S> dst(xn.grad.plane(in, c0), count * plane);
      dst += g;
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <class S>
Var<S> sum_squares(const Var<S>& x) {
  Tensor<S> out = Tensor<S>::scalar(S(x.value().data.square().sum()));
  return make_op<S>("sum_squares", std::move(out), {x}, [](Node<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.data += (S(2) * node.grad.data[0]) * xn.value.data;
  });
}

template <class S>
Var<S> mean_all(const Var<S>& x) {
  const S inv = S(1) / S(x.value().size());
  Tensor<S> out = Tensor<S>::scalar(S(x.value().data.sum()) * inv);
  return make_op<S>("mean_all", std::move(out), {x}, [inv](Node<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    xn.grad.data += node.grad.data[0] * inv;
  });
}

// Global average pool: (N,C,H,W) -> (N,C,1,1)
template <class S>
Var<S> global_avg_pool(const Var<S>& x) {
  const Tensor<S>& xv = x.value();
  const std::int64_t plane = std::int64_t(xv.h) * xv.w;
  const S inv = S(1) / S(plane);
  Tensor<S> out(xv.n, xv.c, 1, 1);
  for (int in = 0; in < xv.n; ++in)
    for (int ic = 0; ic < xv.c; ++ic) {
      detail::CVecMap<S> p(xv.plane(in, ic), plane);
      out.at(in, ic, 0, 0) = p.sum() * inv;
    }
  return make_op<S>("global_avg_pool", std::move(out), {x}, [plane, inv](Node<S>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    for (int in = 0; in < xn.value.n; ++in)
      for (int ic = 0; ic < xn.value.c; ++ic) {
        detail::VecMap<S> dst(xn.grad.plane(in, ic), plane);
        dst.array() += node.grad.at(in, ic, 0, 0) * inv;
      }
  });
}

template <class S>
S scalar_of(const Var<S>& x) {
  if (x.value().size() != 1) throw ContractViolation("scalar_of: tensor is not scalar");
  return x.value().data[0];
}

// ---------------------------------------------------------------------------
// Layers

// Uniform fan-in init: U(-1/sqrt(fan_in), +1/sqrt(fan_in)), zero bias.
template <class S>
Tensor<S> uniform_fan_in(int co, int ci, int k, Rng& rng) {
  Tensor<S> w(co, ci, k, k);
  const double bound = 1.0 / std::sqrt(double(ci) * k * k);
  for (std::int64_t i = 0; i < w.size(); ++i) w.data[i] = S(rng.uniform(-bound, bound));
  return w;
}

template <class S>
struct Conv2d {
  Var<S> w, b;
  int k = 3, stride = 1, pad = 1;

  Conv2d() = default;
  Conv2d(int cin, int cout, int k_, int stride_, Rng& rng)
      : w(Var<S>::param(uniform_fan_in<S>(cout, cin, k_, rng))),
        b(Var<S>::param(Tensor<S>::zeros(1, cout, 1, 1))),
        k(k_),
        stride(stride_),
        pad((k_ - 1) / 2) {}

  Var<S> operator()(const Var<S>& x) const { return conv2d(x, w, b, stride, pad); }

  int out_channels() const { return w.value().n; }
  int in_channels() const { return w.value().c; }

  void collect(const std::string& name, ParamList<S>& out) const {
    out.emplace_back(name + ".w", w);
    out.emplace_back(name + ".b", b);
  }
};

// ---------------------------------------------------------------------------
// Optimizer

template <class S>
class Adam {
 public:
  Adam() = default;
  Adam(ParamList<S> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    slots_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& v = params_[i].second.value();
      slots_[i].m = Tensor<S>::zeros(v.n, v.c, v.h, v.w);
      slots_[i].v = Tensor<S>::zeros(v.n, v.c, v.h, v.w);
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.grad().data.setZero();
  }

  void step() {
    ++t_;
    const S bc1 = S(1) - S(std::pow(beta1_, double(t_)));
    const S bc2 = S(1) - S(std::pow(beta2_, double(t_)));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i].second;
      auto& sl = slots_[i];
      const auto& g = p.grad().data;
      sl.m.data = S(beta1_) * sl.m.data + S(1 - beta1_) * g;
      sl.v.data = S(beta2_) * sl.v.data + S(1 - beta2_) * g.square();
      p.value().data -= S(lr_) * (sl.m.data / bc1) / ((sl.v.data / bc2).sqrt() + S(eps_));
    }
  }

  long steps_taken() const { return t_; }
  void set_steps_taken(long t) { t_ = t; }
  double learning_rate() const { return lr_; }

  const ParamList<S>& params() const { return params_; }
  // moment tensors, exposed for checkpointing under stable names
  Tensor<S>& moment1(std::size_t i) { return slots_[i].m; }
  Tensor<S>& moment2(std::size_t i) { return slots_[i].v; }
  std::size_t size() const { return params_.size(); }
  const std::string& name(std::size_t i) const { return params_[i].first; }

 private:
  struct Slot {
    Tensor<S> m, v;
  };
  ParamList<S> params_;
  std::vector<Slot> slots_;
  long t_ = 0;
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
};

}  // namespace mspn
