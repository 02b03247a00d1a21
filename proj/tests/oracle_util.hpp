#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

// Plain-loop reference kernels used by oracle tests. Independent of the
// library's im2col/GEMM path on purpose.

namespace oracle {

// Same-padding stride-1 cross-correlation on one batch item, double loops.
inline std::vector<double> conv_same(const std::vector<double>& x, int c, int h, int w,
                                     const std::vector<double>& wgt, int co, int kh, int kw,
                                     const std::vector<double>& bias) {
  const int pt = (kh - 1) / 2, pl = (kw - 1) / 2;
  std::vector<double> out(static_cast<size_t>(co) * h * w, 0.0);
  for (int o = 0; o < co; ++o)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        double acc = bias[o];
        for (int ci = 0; ci < c; ++ci)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              int iy = y + ky - pt, ix = xx + kx - pl;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += x[(static_cast<size_t>(ci) * h + iy) * w + ix] *
                     wgt[((static_cast<size_t>(o) * c + ci) * kh + ky) * kw + kx];
            }
        out[(static_cast<size_t>(o) * h + y) * w + xx] = acc;
      }
  return out;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace oracle
