#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "trb/kernels.hpp"
#include "trb/tensor.hpp"

namespace trb {

// Weight layout (out_channels, in_channels, k_h, k_w); bias (out_channels,1,1,1).
// Kernels are odd-sized: only same-padding convolutions exist here.
template <typename T>
struct ConvParams {
  Tensor<T> weight;
  Tensor<T> bias;

  int out_channels() const { return weight.shape().n; }
  int in_channels() const { return weight.shape().c; }
  int kh() const { return weight.shape().h; }
  int kw() const { return weight.shape().w; }

  static ConvParams make(int co, int ci, int kh, int kw, bool requires_grad = true) {
    if (kh % 2 == 0 || kw % 2 == 0) shape_fail("ConvParams", "kernel dims must be odd");
    ConvParams p;
    p.weight = Tensor<T>::zeros(Shape{co, ci, kh, kw}, requires_grad);
    p.bias = Tensor<T>::zeros(Shape{co, 1, 1, 1}, requires_grad);
    return p;
  }
  // He-style fan-in init.
  static ConvParams he_init(int co, int ci, int kh, int kw, Rng& rng, bool requires_grad = true) {
    ConvParams p = make(co, ci, kh, kw, requires_grad);
    T s = static_cast<T>(std::sqrt(2.0 / (static_cast<double>(ci) * kh * kw)));
    for (auto& v : p.weight.values()) v = static_cast<T>(rng.normal()) * s;
    return p;
  }
};

namespace detail {

template <typename T>
inline void maybe_check(const char* op, const Tensor<T>& t) {
  if (finite_checks_enabled()) check_finite(op, t.data(), t.numel());
}

template <typename T>
inline bool any_rg(std::initializer_list<const Tensor<T>*> ts) {
  for (auto* t : ts)
    if (t->requires_grad()) return true;
  return false;
}

// Adds src into dst's grad if dst wants one. out_g may be missing when the
// tensor was never reached by the pass.
template <typename T>
inline T* grad_of(const std::shared_ptr<TensorImpl<T>>& impl) {
  impl->ensure_grad();
  return impl->g.data();
}

inline void same_pad(int in, int k, int stride, int* out, int* pad) {
  *out = (in + stride - 1) / stride;
  int total = (*out - 1) * stride + k - in;
  if (total < 0) total = 0;
  *pad = total / 2;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: cross-correlation plus bias, same padding, output = ceil(in/stride).

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const ConvParams<T>& p, int stride = 1) {
  const Shape xs = x.shape();
  if (xs.c != p.in_channels())
    shape_fail("conv2d", "input channels " + std::to_string(xs.c) + " != weight in_channels " +
                             std::to_string(p.in_channels()));
  if (stride < 1) shape_fail("conv2d", "stride must be positive");
  int oh, ow, ph, pw;
  detail::same_pad(xs.h, p.kh(), stride, &oh, &ph);
  detail::same_pad(xs.w, p.kw(), stride, &ow, &pw);
  const int co = p.out_channels(), ci = xs.c, kh = p.kh(), kw = p.kw();
  const int kdim = ci * kh * kw;
  const std::size_t npix = static_cast<std::size_t>(oh) * ow;
  const bool pointwise = (kh == 1 && kw == 1 && stride == 1);

  bool rg = detail::any_rg<T>({&x, &p.weight, &p.bias});
  Tensor<T> out = Tensor<T>::zeros(Shape{xs.n, co, oh, ow}, rg);

  std::vector<T> col;
  if (!pointwise) col.resize(static_cast<std::size_t>(kdim) * npix);
  for (int b = 0; b < xs.n; ++b) {
    const T* xb = x.data() + static_cast<std::size_t>(b) * ci * xs.h * xs.w;
    const T* cb = xb;
    if (!pointwise) {
      kern::im2col(xb, ci, xs.h, xs.w, kh, kw, stride, ph, pw, oh, ow, col.data());
      cb = col.data();
    }
    kern::gemm_bias(p.weight.data(), p.bias.data(), cb, co, kdim, npix,
                    out.data() + static_cast<std::size_t>(b) * co * npix);
  }
  detail::maybe_check("conv2d", out);

  if (tape.recording() && rg) {
    auto xi = x.impl, wi = p.weight.impl, bi = p.bias.impl, oi = out.impl;
    tape.record(out, {xi, wi, bi}, [=]() {
      if (oi->g.empty()) return;
      const int h = xi->shape.h, w = xi->shape.w, n = xi->shape.n;
      std::vector<T> colb, dcol;
      if (!pointwise) {
        colb.resize(static_cast<std::size_t>(kdim) * npix);
        dcol.resize(static_cast<std::size_t>(kdim) * npix);
      }
      T* dw = wi->requires_grad ? detail::grad_of(wi) : nullptr;
      T* db = bi->requires_grad ? detail::grad_of(bi) : nullptr;
      T* dx = xi->requires_grad ? detail::grad_of(xi) : nullptr;
      for (int b = 0; b < n; ++b) {
        const T* dyb = oi->g.data() + static_cast<std::size_t>(b) * co * npix;
        const T* xb = xi->v.data() + static_cast<std::size_t>(b) * ci * h * w;
        const T* cb = xb;
        if (!pointwise) {
          kern::im2col(xb, ci, h, w, kh, kw, stride, ph, pw, oh, ow, colb.data());
          cb = colb.data();
        }
        if (db)
          for (int c = 0; c < co; ++c) db[c] += kern::sum(dyb + static_cast<std::size_t>(c) * npix, npix);
        if (dw) kern::gemm_nt_acc(dyb, cb, co, kdim, npix, dw);
        if (dx) {
          T* dxb = dx + static_cast<std::size_t>(b) * ci * h * w;
          if (pointwise) {
            kern::gemm_tn_acc(wi->v.data(), dyb, co, kdim, npix, dxb);
          } else {
            std::fill(dcol.begin(), dcol.end(), T(0));
            kern::gemm_tn_acc(wi->v.data(), dyb, co, kdim, npix, dcol.data());
            kern::col2im_acc(dcol.data(), ci, h, w, kh, kw, stride, ph, pw, oh, ow, dxb);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise ops.

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape(), x.requires_grad());
  const T* xv = x.data();
  T* ov = out.data();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    T v = xv[i];
    if (v >= 0) {
      ov[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      T e = std::exp(v);
      ov[i] = e / (T(1) + e);
    }
  }
  detail::maybe_check("sigmoid", out);
  if (tape.recording() && x.requires_grad()) {
    auto xi = x.impl, oi = out.impl;
    tape.record(out, {xi}, [=]() {
      if (oi->g.empty()) return;
      T* dx = detail::grad_of(xi);
      for (std::size_t i = 0; i < oi->v.size(); ++i)
        dx[i] += oi->g[i] * oi->v[i] * (T(1) - oi->v[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape(), x.requires_grad());
  const T* xv = x.data();
  T* ov = out.data();
  for (std::size_t i = 0; i < x.numel(); ++i) ov[i] = xv[i] > 0 ? xv[i] : T(0);
  if (tape.recording() && x.requires_grad()) {
    auto xi = x.impl, oi = out.impl;
    tape.record(out, {xi}, [=]() {
      if (oi->g.empty()) return;
      T* dx = detail::grad_of(xi);
      for (std::size_t i = 0; i < oi->v.size(); ++i)
        if (xi->v[i] > 0) dx[i] += oi->g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape()))
    shape_fail("add", a.shape().str() + " vs " + b.shape().str());
  bool rg = detail::any_rg<T>({&a, &b});
  Tensor<T> out = Tensor<T>::zeros(a.shape(), rg);
  const T* av = a.data();
  const T* bv = b.data();
  T* ov = out.data();
  for (std::size_t i = 0; i < a.numel(); ++i) ov[i] = av[i] + bv[i];
  detail::maybe_check("add", out);
  if (tape.recording() && rg) {
    auto ai = a.impl, bi = b.impl, oi = out.impl;
    tape.record(out, {ai, bi}, [=]() {
      if (oi->g.empty()) return;
      if (ai->requires_grad) kern::axpy(detail::grad_of(ai), T(1), oi->g.data(), oi->g.size());
      if (bi->requires_grad) kern::axpy(detail::grad_of(bi), T(1), oi->g.data(), oi->g.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape()))
    shape_fail("mul", a.shape().str() + " vs " + b.shape().str());
  bool rg = detail::any_rg<T>({&a, &b});
  Tensor<T> out = Tensor<T>::zeros(a.shape(), rg);
  const T* av = a.data();
  const T* bv = b.data();
  T* ov = out.data();
  for (std::size_t i = 0; i < a.numel(); ++i) ov[i] = av[i] * bv[i];
  detail::maybe_check("mul", out);
  if (tape.recording() && rg) {
    auto ai = a.impl, bi = b.impl, oi = out.impl;
    tape.record(out, {ai, bi}, [=]() {
      if (oi->g.empty()) return;
      if (ai->requires_grad) {
        T* da = detail::grad_of(ai);
        for (std::size_t i = 0; i < oi->g.size(); ++i) da[i] += oi->g[i] * bi->v[i];
      }
      if (bi->requires_grad) {
        T* db = detail::grad_of(bi);
        for (std::size_t i = 0; i < oi->g.size(); ++i) db[i] += oi->g[i] * ai->v[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T factor) {
  Tensor<T> out = Tensor<T>::zeros(x.shape(), x.requires_grad());
  const T* xv = x.data();
  T* ov = out.data();
  for (std::size_t i = 0; i < x.numel(); ++i) ov[i] = xv[i] * factor;
  if (tape.recording() && x.requires_grad()) {
    auto xi = x.impl, oi = out.impl;
    tape.record(out, {xi}, [=]() {
      if (oi->g.empty()) return;
      kern::axpy(detail::grad_of(xi), factor, oi->g.data(), oi->g.size());
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channel stacking / selection.

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) shape_fail("concat_channels", "empty input list");
  Shape s0 = parts[0].shape();
  int ctot = 0;
  bool rg = false;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      shape_fail("concat_channels", "mismatch " + s.str() + " vs " + s0.str());
    ctot += s.c;
    rg = rg || p.requires_grad();
  }
  Tensor<T> out = Tensor<T>::zeros(Shape{s0.n, ctot, s0.h, s0.w}, rg);
  const std::size_t plane = static_cast<std::size_t>(s0.h) * s0.w;
  for (int b = 0; b < s0.n; ++b) {
    std::size_t coff = 0;
    for (const auto& p : parts) {
      const int pc = p.shape().c;
      std::copy_n(p.data() + static_cast<std::size_t>(b) * pc * plane, static_cast<std::size_t>(pc) * plane,
                  out.data() + (static_cast<std::size_t>(b) * ctot + coff) * plane);
      coff += pc;
    }
  }
  if (tape.recording() && rg) {
    std::vector<std::shared_ptr<TensorImpl<T>>> impls;
    for (const auto& p : parts) impls.push_back(p.impl);
    auto oi = out.impl;
    tape.record(out, impls, [=]() {
      if (oi->g.empty()) return;
      for (int b = 0; b < oi->shape.n; ++b) {
        std::size_t coff = 0;
        for (const auto& pi : impls) {
          const int pc = pi->shape.c;
          if (pi->requires_grad) {
            kern::axpy(detail::grad_of(pi) + static_cast<std::size_t>(b) * pc * plane, T(1),
                       oi->g.data() + (static_cast<std::size_t>(b) * oi->shape.c + coff) * plane,
                       static_cast<std::size_t>(pc) * plane);
          }
          coff += pc;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(Tape<T>& tape, const Tensor<T>& x, int begin, int count) {
  const Shape s = x.shape();
  if (begin < 0 || count < 1 || begin + count > s.c)
    shape_fail("slice_channels", "range [" + std::to_string(begin) + "," +
                                     std::to_string(begin + count) + ") of " + std::to_string(s.c));
  Tensor<T> out = Tensor<T>::zeros(Shape{s.n, count, s.h, s.w}, x.requires_grad());
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (int b = 0; b < s.n; ++b)
    std::copy_n(x.data() + (static_cast<std::size_t>(b) * s.c + begin) * plane,
                static_cast<std::size_t>(count) * plane,
                out.data() + static_cast<std::size_t>(b) * count * plane);
  if (tape.recording() && x.requires_grad()) {
    auto xi = x.impl, oi = out.impl;
    tape.record(out, {xi}, [=]() {
      if (oi->g.empty()) return;
      T* dx = detail::grad_of(xi);
      for (int b = 0; b < s.n; ++b)
        kern::axpy(dx + (static_cast<std::size_t>(b) * s.c + begin) * plane, T(1),
                   oi->g.data() + static_cast<std::size_t>(b) * count * plane,
                   static_cast<std::size_t>(count) * plane);
    });
  }
  return out;
}

// out channel i = x channel idx[i]; an index may repeat.
template <typename T>
Tensor<T> gather_channels(Tape<T>& tape, const Tensor<T>& x, const std::vector<int>& idx) {
  const Shape s = x.shape();
  for (int i : idx)
    if (i < 0 || i >= s.c) shape_fail("gather_channels", "index " + std::to_string(i) + " out of range");
  Tensor<T> out = Tensor<T>::zeros(Shape{s.n, static_cast<int>(idx.size()), s.h, s.w}, x.requires_grad());
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (int b = 0; b < s.n; ++b)
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy_n(x.data() + (static_cast<std::size_t>(b) * s.c + idx[i]) * plane, plane,
                  out.data() + (static_cast<std::size_t>(b) * idx.size() + i) * plane);
  if (tape.recording() && x.requires_grad()) {
    auto xi = x.impl, oi = out.impl;
    auto ids = idx;
    tape.record(out, {xi}, [=]() {
      if (oi->g.empty()) return;
      T* dx = detail::grad_of(xi);
      for (int b = 0; b < s.n; ++b)
        for (std::size_t i = 0; i < ids.size(); ++i)
          kern::axpy(dx + (static_cast<std::size_t>(b) * s.c + ids[i]) * plane, T(1),
                     oi->g.data() + (static_cast<std::size_t>(b) * ids.size() + i) * plane, plane);
    });
  }
  return out;
}

// out channel j = sum over inputs i with target[i] == j of weight[i] * x channel i.
template <typename T>
Tensor<T> scatter_channels(Tape<T>& tape, const Tensor<T>& x, const std::vector<int>& target,
                           int out_channels, const std::vector<T>& weight) {
  const Shape s = x.shape();
  if (static_cast<int>(target.size()) != s.c || weight.size() != target.size())
    shape_fail("scatter_channels", "target/weight length != input channels");
  for (int t : target)
    if (t < 0 || t >= out_channels) shape_fail("scatter_channels", "target out of range");
  Tensor<T> out = Tensor<T>::zeros(Shape{s.n, out_channels, s.h, s.w}, x.requires_grad());
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (int b = 0; b < s.n; ++b)
    for (int i = 0; i < s.c; ++i)
      kern::axpy(out.data() + (static_cast<std::size_t>(b) * out_channels + target[i]) * plane,
                 weight[i], x.data() + (static_cast<std::size_t>(b) * s.c + i) * plane, plane);
  if (tape.recording() && x.requires_grad()) {
    auto xi = x.impl, oi = out.impl;
    auto tg = target;
    auto wt = weight;
    tape.record(out, {xi}, [=]() {
      if (oi->g.empty()) return;
      T* dx = detail::grad_of(xi);
      for (int b = 0; b < s.n; ++b)
        for (int i = 0; i < s.c; ++i)
          kern::axpy(dx + (static_cast<std::size_t>(b) * s.c + i) * plane, wt[i],
                     oi->g.data() + (static_cast<std::size_t>(b) * out_channels + tg[i]) * plane,
                     plane);
    });
  }
  return out;
}

// Broadcast multiply: w has one channel, applied to every channel of x.
template <typename T>
Tensor<T> mul_plane(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w) {
  const Shape xs = x.shape(), ws = w.shape();
  if (ws.n != xs.n || ws.c != 1 || ws.h != xs.h || ws.w != xs.w)
    shape_fail("mul_plane", "weight " + ws.str() + " must be (n,1,h,w) matching " + xs.str());
  bool rg = detail::any_rg<T>({&x, &w});
  Tensor<T> out = Tensor<T>::zeros(xs, rg);
  const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
  for (int b = 0; b < xs.n; ++b) {
    const T* wp = w.data() + static_cast<std::size_t>(b) * plane;
    for (int c = 0; c < xs.c; ++c) {
      const T* xp = x.data() + (static_cast<std::size_t>(b) * xs.c + c) * plane;
      T* op = out.data() + (static_cast<std::size_t>(b) * xs.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) op[i] = xp[i] * wp[i];
    }
  }
  detail::maybe_check("mul_plane", out);
  if (tape.recording() && rg) {
    auto xi = x.impl, wi = w.impl, oi = out.impl;
    tape.record(out, {xi, wi}, [=]() {
      if (oi->g.empty()) return;
      T* dx = xi->requires_grad ? detail::grad_of(xi) : nullptr;
      T* dw = wi->requires_grad ? detail::grad_of(wi) : nullptr;
      for (int b = 0; b < xs.n; ++b) {
        const T* wp = wi->v.data() + static_cast<std::size_t>(b) * plane;
        for (int c = 0; c < xs.c; ++c) {
          const std::size_t off = (static_cast<std::size_t>(b) * xs.c + c) * plane;
          const T* go = oi->g.data() + off;
          if (dx)
            for (std::size_t i = 0; i < plane; ++i) dx[off + i] += go[i] * wp[i];
          if (dw) {
            const T* xp = xi->v.data() + off;
            T* dwp = dw + static_cast<std::size_t>(b) * plane;
            for (std::size_t i = 0; i < plane; ++i) dwp[i] += go[i] * xp[i];
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses.

// Sum of squared differences divided by batch size; scalar output.
template <typename T>
Tensor<T> mse_sum(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target) {
  if (!(pred.shape() == target.shape()))
    shape_fail("mse_sum", pred.shape().str() + " vs " + target.shape().str());
  bool rg = detail::any_rg<T>({&pred, &target});
  const T inv_n = T(1) / static_cast<T>(pred.shape().n);
  const T* pv = pred.data();
  const T* tv = target.data();
  T acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
  std::size_t i = 0;
  const std::size_t m = pred.numel();
  for (; i + 4 <= m; i += 4) {
    T d0 = pv[i] - tv[i], d1 = pv[i + 1] - tv[i + 1];
    T d2 = pv[i + 2] - tv[i + 2], d3 = pv[i + 3] - tv[i + 3];
    acc0 += d0 * d0;
    acc1 += d1 * d1;
    acc2 += d2 * d2;
    acc3 += d3 * d3;
  }
  T tail = 0;
  for (; i < m; ++i) {
    T d = pv[i] - tv[i];
    tail += d * d;
  }
  Tensor<T> out = Tensor<T>::scalar((((acc0 + acc1) + (acc2 + acc3)) + tail) * inv_n, rg);
  detail::maybe_check("mse_sum", out);
  if (tape.recording() && rg) {
    auto pi = pred.impl, ti = target.impl, oi = out.impl;
    tape.record(out, {pi, ti}, [=]() {
      if (oi->g.empty()) return;
      const T go = oi->g[0] * T(2) * inv_n;
      if (pi->requires_grad) {
        T* dp = detail::grad_of(pi);
        for (std::size_t k = 0; k < pi->v.size(); ++k) dp[k] += go * (pi->v[k] - ti->v[k]);
      }
      if (ti->requires_grad) {
        T* dt = detail::grad_of(ti);
        for (std::size_t k = 0; k < ti->v.size(); ++k) dt[k] -= go * (pi->v[k] - ti->v[k]);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bilinear warp. output(x,y) samples h at (x + fx, y + fy); out-of-bounds
// reads are zero. flow has 2 channels (shared across h's channels) or
// 2*C channels (channel pair i warps h channel i).

template <typename T>
Tensor<T> bilinear_sample(Tape<T>& tape, const Tensor<T>& h, const Tensor<T>& flow) {
  const Shape hs = h.shape(), fs = flow.shape();
  const bool grouped = (fs.c == 2 * hs.c && hs.c != 1) || (hs.c == 1 && fs.c == 2);
  if (fs.n != hs.n || fs.h != hs.h || fs.w != hs.w || (fs.c != 2 && fs.c != 2 * hs.c))
    shape_fail("bilinear_sample", "flow " + fs.str() + " incompatible with input " + hs.str());
  bool rg = detail::any_rg<T>({&h, &flow});
  Tensor<T> out = Tensor<T>::zeros(hs, rg);
  const int H = hs.h, W = hs.w;
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  auto run_fwd = [&](const T* hv, const T* fv, T* ov) {
    for (int c = 0; c < hs.c; ++c) {
      const T* hp = hv + static_cast<std::size_t>(c) * plane;
      const T* fx = fv + static_cast<std::size_t>(grouped ? 2 * c : 0) * plane;
      const T* fy = fx + plane;
      T* op = ov + static_cast<std::size_t>(c) * plane;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const std::size_t j = static_cast<std::size_t>(y) * W + x;
          T sx = static_cast<T>(x) + fx[j];
          T sy = static_cast<T>(y) + fy[j];
          T fx0 = std::floor(sx), fy0 = std::floor(sy);
          int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
          T wx = sx - fx0, wy = sy - fy0;
          auto pick = [&](int yy, int xx) -> T {
            return (yy >= 0 && yy < H && xx >= 0 && xx < W) ? hp[static_cast<std::size_t>(yy) * W + xx]
                                                            : T(0);
          };
          T v00 = pick(y0, x0), v01 = pick(y0, x0 + 1);
          T v10 = pick(y0 + 1, x0), v11 = pick(y0 + 1, x0 + 1);
          op[j] = (T(1) - wy) * ((T(1) - wx) * v00 + wx * v01) + wy * ((T(1) - wx) * v10 + wx * v11);
        }
      }
    }
  };
  for (int b = 0; b < hs.n; ++b)
    run_fwd(h.data() + static_cast<std::size_t>(b) * hs.c * plane,
            flow.data() + static_cast<std::size_t>(b) * fs.c * plane,
            out.data() + static_cast<std::size_t>(b) * hs.c * plane);
  detail::maybe_check("bilinear_sample", out);

  if (tape.recording() && rg) {
    auto hi = h.impl, fi = flow.impl, oi = out.impl;
    tape.record(out, {hi, fi}, [=]() {
      if (oi->g.empty()) return;
      T* dh = hi->requires_grad ? detail::grad_of(hi) : nullptr;
      T* df = fi->requires_grad ? detail::grad_of(fi) : nullptr;
      for (int b = 0; b < hs.n; ++b) {
        const T* hv = hi->v.data() + static_cast<std::size_t>(b) * hs.c * plane;
        const T* fv = fi->v.data() + static_cast<std::size_t>(b) * fs.c * plane;
        const T* gv = oi->g.data() + static_cast<std::size_t>(b) * hs.c * plane;
        for (int c = 0; c < hs.c; ++c) {
          const T* hp = hv + static_cast<std::size_t>(c) * plane;
          const std::size_t foff = static_cast<std::size_t>(grouped ? 2 * c : 0) * plane;
          const T* fx = fv + foff;
          const T* fy = fx + plane;
          const T* gp = gv + static_cast<std::size_t>(c) * plane;
          for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
              const std::size_t j = static_cast<std::size_t>(y) * W + x;
              const T go = gp[j];
              if (go == T(0)) continue;
              T sx = static_cast<T>(x) + fx[j];
              T sy = static_cast<T>(y) + fy[j];
              T fx0 = std::floor(sx), fy0 = std::floor(sy);
              int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
              T wx = sx - fx0, wy = sy - fy0;
              auto in = [&](int yy, int xx) { return yy >= 0 && yy < H && xx >= 0 && xx < W; };
              auto pick = [&](int yy, int xx) -> T {
                return in(yy, xx) ? hp[static_cast<std::size_t>(yy) * W + xx] : T(0);
              };
              T v00 = pick(y0, x0), v01 = pick(y0, x0 + 1);
              T v10 = pick(y0 + 1, x0), v11 = pick(y0 + 1, x0 + 1);
              if (dh) {
                T* dhp = dh + (static_cast<std::size_t>(b) * hs.c + c) * plane;
                if (in(y0, x0)) dhp[static_cast<std::size_t>(y0) * W + x0] += go * (T(1) - wy) * (T(1) - wx);
                if (in(y0, x0 + 1)) dhp[static_cast<std::size_t>(y0) * W + x0 + 1] += go * (T(1) - wy) * wx;
                if (in(y0 + 1, x0)) dhp[static_cast<std::size_t>(y0 + 1) * W + x0] += go * wy * (T(1) - wx);
                if (in(y0 + 1, x0 + 1)) dhp[static_cast<std::size_t>(y0 + 1) * W + x0 + 1] += go * wy * wx;
              }
              if (df) {
                T dvx = (T(1) - wy) * (v01 - v00) + wy * (v11 - v10);
                T dvy = (T(1) - wx) * (v10 - v00) + wx * (v11 - v01);
                df[static_cast<std::size_t>(b) * fs.c * plane + foff + j] += go * dvx;
                df[static_cast<std::size_t>(b) * fs.c * plane + foff + plane + j] += go * dvy;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spatial pad / crop / pool / upsample.

template <typename T>
Tensor<T> pad2d(Tape<T>& tape, const Tensor<T>& x, int top, int bottom, int left, int right) {
  if (top < 0 || bottom < 0 || left < 0 || right < 0) shape_fail("pad2d", "negative pad");
  const Shape s = x.shape();
  Tensor<T> out = Tensor<T>::zeros(Shape{s.n, s.c, s.h + top + bottom, s.w + left + right},
                                   x.requires_grad());
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        std::copy_n(x.data() + x.index(b, c, y, 0), s.w,
                    out.data() + out.index(b, c, y + top, left));
  if (tape.recording() && x.requires_grad()) {
    auto xi = x.impl, oi = out.impl;
    tape.record(out, {xi}, [=]() {
      if (oi->g.empty()) return;
      T* dx = detail::grad_of(xi);
      const Shape os = oi->shape;
      for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < s.c; ++c)
          for (int y = 0; y < s.h; ++y)
            kern::axpy(dx + ((static_cast<std::size_t>(b) * s.c + c) * s.h + y) * s.w, T(1),
                       oi->g.data() +
                           ((static_cast<std::size_t>(b) * os.c + c) * os.h + y + top) * os.w + left,
                       s.w);
    });
  }
  return out;
}

template <typename T>
Tensor<T> crop2d(Tape<T>& tape, const Tensor<T>& x, int top, int left, int oh, int ow) {
  const Shape s = x.shape();
  if (top < 0 || left < 0 || top + oh > s.h || left + ow > s.w)
    shape_fail("crop2d", "window outside input " + s.str());
  Tensor<T> out = Tensor<T>::zeros(Shape{s.n, s.c, oh, ow}, x.requires_grad());
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < oh; ++y)
        std::copy_n(x.data() + x.index(b, c, y + top, left), ow,
                    out.data() + out.index(b, c, y, 0));
  if (tape.recording() && x.requires_grad()) {
    auto xi = x.impl, oi = out.impl;
    tape.record(out, {xi}, [=]() {
      if (oi->g.empty()) return;
      T* dx = detail::grad_of(xi);
      for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < s.c; ++c)
          for (int y = 0; y < oh; ++y)
            kern::axpy(dx + ((static_cast<std::size_t>(b) * s.c + c) * s.h + y + top) * s.w + left,
                       T(1),
                       oi->g.data() + ((static_cast<std::size_t>(b) * s.c + c) * oh + y) * ow, ow);
    });
  }
  return out;
}

// 2x2 max pooling, stride 2; spatial dims must be even.
template <typename T>
Tensor<T> maxpool2(Tape<T>& tape, const Tensor<T>& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) shape_fail("maxpool2", "odd spatial size " + s.str());
  const int oh = s.h / 2, ow = s.w / 2;
  Tensor<T> out = Tensor<T>::zeros(Shape{s.n, s.c, oh, ow}, x.requires_grad());
  auto arg = std::make_shared<std::vector<std::uint32_t>>(out.numel());
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < oh; ++y)
        for (int xo = 0; xo < ow; ++xo) {
          std::size_t base = x.index(b, c, 2 * y, 2 * xo);
          std::size_t best = base;
          T bv = x.impl->v[base];
          const std::size_t cand[3] = {base + 1, base + s.w, base + s.w + 1};
          for (std::size_t k : cand)
            if (x.impl->v[k] > bv) {
              bv = x.impl->v[k];
              best = k;
            }
          std::size_t oidx = out.index(b, c, y, xo);
          out.impl->v[oidx] = bv;
          (*arg)[oidx] = static_cast<std::uint32_t>(best);
        }
  if (tape.recording() && x.requires_grad()) {
    auto xi = x.impl, oi = out.impl;
    tape.record(out, {xi}, [=]() {
      if (oi->g.empty()) return;
      T* dx = detail::grad_of(xi);
      for (std::size_t i = 0; i < oi->g.size(); ++i) dx[(*arg)[i]] += oi->g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> upsample_nearest2(Tape<T>& tape, const Tensor<T>& x) {
  const Shape s = x.shape();
  Tensor<T> out = Tensor<T>::zeros(Shape{s.n, s.c, s.h * 2, s.w * 2}, x.requires_grad());
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int xo = 0; xo < s.w; ++xo) {
          T v = x.at(b, c, y, xo);
          out.at(b, c, 2 * y, 2 * xo) = v;
          out.at(b, c, 2 * y, 2 * xo + 1) = v;
          out.at(b, c, 2 * y + 1, 2 * xo) = v;
          out.at(b, c, 2 * y + 1, 2 * xo + 1) = v;
        }
  if (tape.recording() && x.requires_grad()) {
    auto xi = x.impl, oi = out.impl;
    tape.record(out, {xi}, [=]() {
      if (oi->g.empty()) return;
      T* dx = detail::grad_of(xi);
      const Shape os = oi->shape;
      for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < s.c; ++c)
          for (int y = 0; y < s.h; ++y)
            for (int xo = 0; xo < s.w; ++xo) {
              const std::size_t o00 =
                  ((static_cast<std::size_t>(b) * os.c + c) * os.h + 2 * y) * os.w + 2 * xo;
              const std::size_t o10 = o00 + static_cast<std::size_t>(os.w);
              dx[((static_cast<std::size_t>(b) * s.c + c) * s.h + y) * s.w + xo] +=
                  oi->g[o00] + oi->g[o00 + 1] + oi->g[o10] + oi->g[o10 + 1];
            }
    });
  }
  return out;
}

}  // namespace trb
