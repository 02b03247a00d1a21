#pragma once

#include <cstddef>
#include <vector>

namespace trb::kern {

// y[i] += a * x[i]
template <typename T>
inline void axpy(T* y, T a, const T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Dot product with 8 independent accumulator lanes combined in a fixed
// order, so the compiler can vectorize the reduction and the result stays
// bit-deterministic.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 += a[i + 0] * b[i + 0];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
    s4 += a[i + 4] * b[i + 4];
    s5 += a[i + 5] * b[i + 5];
    s6 += a[i + 6] * b[i + 6];
    s7 += a[i + 7] * b[i + 7];
  }
  T tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return (((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7))) + tail;
}

template <typename T>
inline T sum(const T* a, std::size_t n) {
  T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i + 0];
    s1 += a[i + 1];
    s2 += a[i + 2];
    s3 += a[i + 3];
  }
  T tail = 0;
  for (; i < n; ++i) tail += a[i];
  return ((s0 + s1) + (s2 + s3)) + tail;
}

// col buffer layout: [ci*kh*kw][oh*ow], row-major. One batch item at a time.
// Same-padding: pad_h/pad_w give the top/left margin.
template <typename T>
void im2col(const T* x, int ci, int h, int w, int kh, int kw, int stride,
            int pad_h, int pad_w, int oh, int ow, T* col) {
  for (int c = 0; c < ci; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = col + (static_cast<std::size_t>(c) * kh * kw + ky * kw + kx) *
                           (static_cast<std::size_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ky - pad_h;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < ow; ++ox) dst[ox] = T(0);
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride + kx - pad_w;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-add the col-layout gradient back onto the (ci,h,w) input gradient.
template <typename T>
void col2im_acc(const T* col, int ci, int h, int w, int kh, int kw, int stride,
                int pad_h, int pad_w, int oh, int ow, T* dx) {
  for (int c = 0; c < ci; ++c) {
    T* xc = dx + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = col + (static_cast<std::size_t>(c) * kh * kw + ky * kw + kx) *
                                 (static_cast<std::size_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ky - pad_h;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          T* dst = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride + kx - pad_w;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// out[co][j] = bias[co] + sum_k w[co][k] * col[k][j]; axpy form over j,
// 4-row blocking to amortize col row loads.
template <typename T>
void gemm_bias(const T* w, const T* bias, const T* col, int co, int k, std::size_t n, T* out) {
  int r = 0;
  for (; r + 4 <= co; r += 4) {
    T* o0 = out + static_cast<std::size_t>(r + 0) * n;
    T* o1 = out + static_cast<std::size_t>(r + 1) * n;
    T* o2 = out + static_cast<std::size_t>(r + 2) * n;
    T* o3 = out + static_cast<std::size_t>(r + 3) * n;
    for (std::size_t j = 0; j < n; ++j) {
      o0[j] = bias[r + 0];
      o1[j] = bias[r + 1];
      o2[j] = bias[r + 2];
      o3[j] = bias[r + 3];
    }
    for (int q = 0; q < k; ++q) {
      const T* cq = col + static_cast<std::size_t>(q) * n;
      T w0 = w[static_cast<std::size_t>(r + 0) * k + q];
      T w1 = w[static_cast<std::size_t>(r + 1) * k + q];
      T w2 = w[static_cast<std::size_t>(r + 2) * k + q];
      T w3 = w[static_cast<std::size_t>(r + 3) * k + q];
      for (std::size_t j = 0; j < n; ++j) {
        o0[j] += w0 * cq[j];
        o1[j] += w1 * cq[j];
        o2[j] += w2 * cq[j];
        o3[j] += w3 * cq[j];
      }
    }
  }
  for (; r < co; ++r) {
    T* o = out + static_cast<std::size_t>(r) * n;
    for (std::size_t j = 0; j < n; ++j) o[j] = bias[r];
    for (int q = 0; q < k; ++q)
      axpy(o, w[static_cast<std::size_t>(r) * k + q], col + static_cast<std::size_t>(q) * n, n);
  }
}

// dcol[q][j] += sum_co w[co][q] * dy[co][j]
template <typename T>
void gemm_tn_acc(const T* w, const T* dy, int co, int k, std::size_t n, T* dcol) {
  for (int c = 0; c < co; ++c) {
    const T* dyr = dy + static_cast<std::size_t>(c) * n;
    const T* wr = w + static_cast<std::size_t>(c) * k;
    for (int q = 0; q < k; ++q)
      axpy(dcol + static_cast<std::size_t>(q) * n, wr[q], dyr, n);
  }
}

// dw[co][q] += sum_j dy[co][j] * col[q][j]
template <typename T>
void gemm_nt_acc(const T* dy, const T* col, int co, int k, std::size_t n, T* dw) {
  for (int c = 0; c < co; ++c) {
    const T* dyr = dy + static_cast<std::size_t>(c) * n;
    T* dwr = dw + static_cast<std::size_t>(c) * k;
    for (int q = 0; q < k; ++q) dwr[q] += dot(dyr, col + static_cast<std::size_t>(q) * n, n);
  }
}

}  // namespace trb::kern
