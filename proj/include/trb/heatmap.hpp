#pragma once

#include <cstdint>
#include <vector>

#include "trb/schema.hpp"
#include "trb/tensor.hpp"

namespace trb {

// Gaussian keypoint targets at heatmap resolution. mask holds one
// supervision bit per channel: 0 for unlabeled keypoints (and for labeled
// ones whose quantized center falls outside the map, which carry no signal).
struct HeatmapSet {
  TensorF maps;  // (1, n_keypoints, H, W)
  std::vector<std::uint8_t> mask;
  int stride = 4;
  float sigma = 1.0f;
};

// Peak exactly 1 at the quantized keypoint pixel; truncated at Euclidean
// radius 3 sigma. Coordinates are input-image px, stride converts them.
HeatmapSet render_targets(const PersonAnnotation& a, const KeypointSchema& s, int h_out, int w_out,
                          int stride, float sigma);

struct DecodedPoint {
  float x = 0;  // input px
  float y = 0;
  float score = 0;
};

// Argmax plus a quarter-pixel shift toward the larger axis neighbor, then
// scaled by stride. Ties pick the smallest row-major index. An all-zero
// channel decodes to score 0.
std::vector<DecodedPoint> decode(const TensorF& maps, int stride);

}  // namespace trb
