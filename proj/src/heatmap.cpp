#include "trb/heatmap.hpp"

#include <cmath>

namespace trb {

HeatmapSet render_targets(const PersonAnnotation& a, const KeypointSchema& s, int h_out, int w_out,
                          int stride, float sigma) {
  const int K = s.n_keypoints();
  HeatmapSet h;
  h.maps = TensorF::zeros(Shape{1, K, h_out, w_out});
  h.mask.assign(K, 0);
  h.stride = stride;
  h.sigma = sigma;
  const float r = 3.0f * sigma;
  for (int k = 0; k < K; ++k) {
    const Keypoint& kp = a.keypoints[k];
    if (!kp.labeled()) continue;
    const int cx = static_cast<int>(std::lround(kp.x / stride));
    const int cy = static_cast<int>(std::lround(kp.y / stride));
    if (cx < 0 || cx >= w_out || cy < 0 || cy >= h_out) continue;
    h.mask[k] = 1;
    const int lo_y = std::max(0, static_cast<int>(std::floor(cy - r)));
    const int hi_y = std::min(h_out - 1, static_cast<int>(std::ceil(cy + r)));
    const int lo_x = std::max(0, static_cast<int>(std::floor(cx - r)));
    const int hi_x = std::min(w_out - 1, static_cast<int>(std::ceil(cx + r)));
    for (int y = lo_y; y <= hi_y; ++y)
      for (int x = lo_x; x <= hi_x; ++x) {
        float d2 = static_cast<float>((x - cx) * (x - cx) + (y - cy) * (y - cy));
        if (d2 > r * r) continue;
        h.maps.at(0, k, y, x) = std::exp(-d2 / (2.0f * sigma * sigma));
      }
  }
  return h;
}

std::vector<DecodedPoint> decode(const TensorF& maps, int stride) {
  const Shape s = maps.shape();
  std::vector<DecodedPoint> out;
  out.reserve(static_cast<size_t>(s.n) * s.c);
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c) {
      int best_y = 0, best_x = 0;
      float best = maps.at(b, c, 0, 0);
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          float v = maps.at(b, c, y, x);
          if (v > best) {
            best = v;
            best_y = y;
            best_x = x;
          }
        }
      auto neighbor = [&](int y, int x) -> float {
        return (y >= 0 && y < s.h && x >= 0 && x < s.w) ? maps.at(b, c, y, x) : 0.0f;
      };
      float fx = static_cast<float>(best_x);
      float fy = static_cast<float>(best_y);
      float right = neighbor(best_y, best_x + 1), left = neighbor(best_y, best_x - 1);
      float down = neighbor(best_y + 1, best_x), up = neighbor(best_y - 1, best_x);
      if (right > left)
        fx += 0.25f;
      else if (left > right)
        fx -= 0.25f;
      if (down > up)
        fy += 0.25f;
      else if (up > down)
        fy -= 0.25f;
      out.push_back({fx * stride, fy * stride, best});
    }
  return out;
}

}  // namespace trb
