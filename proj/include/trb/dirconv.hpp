#pragma once

#include <memory>
#include <vector>

#include "trb/ops.hpp"
#include "trb/schedule.hpp"

namespace trb {

// One shared conv runs all K iterations of a block; the 1x1 fusion conv
// turns the concatenated partition outputs into per-partition weight maps.
// Parameter count is therefore independent of K and of the tile count.
template <typename T>
struct DirectionalConvParams {
  ConvParams<T> conv;    // C -> C, square odd kernel
  ConvParams<T> fusion;  // 1x1, n_partitions*C -> n_partitions

  int channels() const { return conv.in_channels(); }
  int n_partitions() const { return fusion.out_channels(); }

  static DirectionalConvParams he_init(int c, int k, int n_partitions, Rng& rng) {
    DirectionalConvParams p;
    p.conv = ConvParams<T>::he_init(c, c, k, k, rng);
    p.fusion = ConvParams<T>::he_init(n_partitions, n_partitions * c, 1, 1, rng);
    return p;
  }
};

template <typename T>
std::size_t param_count(const DirectionalConvParams<T>& p) {
  return p.conv.weight.numel() + p.conv.bias.numel() + p.fusion.weight.numel() +
         p.fusion.bias.numel();
}

// out = mask ? y : prev, a per-pixel masked write. mask is one spatial
// plane broadcast over batch and channels.
template <typename T>
Tensor<T> masked_update(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& prev,
                        std::shared_ptr<const std::vector<std::uint8_t>> mask) {
  const Shape s = y.shape();
  if (!(s == prev.shape())) shape_fail("masked_update", s.str() + " vs " + prev.shape().str());
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  if (mask->size() != plane) shape_fail("masked_update", "mask size != spatial plane");
  bool rg = detail::any_rg<T>({&y, &prev});
  Tensor<T> out = Tensor<T>::zeros(s, rg);
  const std::uint8_t* m = mask->data();
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c) {
      const std::size_t off = (static_cast<std::size_t>(b) * s.c + c) * plane;
      const T* yv = y.data() + off;
      const T* pv = prev.data() + off;
      T* ov = out.data() + off;
      for (std::size_t i = 0; i < plane; ++i) ov[i] = m[i] ? yv[i] : pv[i];
    }
  if (tape.recording() && rg) {
    auto yi = y.impl, pi = prev.impl, oi = out.impl;
    tape.record(out, {yi, pi}, [=]() {
      if (oi->g.empty()) return;
      const std::uint8_t* mm = mask->data();
      T* dy = yi->requires_grad ? detail::grad_of(yi) : nullptr;
      T* dp = pi->requires_grad ? detail::grad_of(pi) : nullptr;
      for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < s.c; ++c) {
          const std::size_t off = (static_cast<std::size_t>(b) * s.c + c) * plane;
          const T* go = oi->g.data() + off;
          for (std::size_t i = 0; i < plane; ++i) {
            if (mm[i]) {
              if (dy) dy[off + i] += go[i];
            } else {
              if (dp) dp[off + i] += go[i];
            }
          }
        }
    });
  }
  return out;
}

// T_k = F_k (W * T_{k-1} + b) + (1 - F_k) T_{k-1} on one g-by-g block.
// The conv reads the whole previous state; zeros outside the block.
template <typename T>
Tensor<T> directional_block(Tape<T>& tape, const Tensor<T>& x, const ConvParams<T>& conv,
                            const CharacteristicSchedule& sched) {
  const Shape s = x.shape();
  if (s.h != sched.g || s.w != sched.g)
    shape_fail("directional_block", "spatial size " + s.str() + " != grid " + std::to_string(sched.g));
  if (conv.in_channels() != s.c || conv.out_channels() != s.c)
    shape_fail("directional_block", "conv must map C -> C");
  Tensor<T> cur = x;
  for (const auto& m : sched.masks) {
    auto plane = std::make_shared<const std::vector<std::uint8_t>>(m);
    Tensor<T> y = conv2d(tape, cur, conv, 1);
    cur = masked_update(tape, y, cur, plane);
  }
  return cur;
}

// Full directional convolution: per partition offset the map is
// zero-padded to whole tiles and the block schedule runs on the entire
// padded map with the masks tiled, so conv context crosses tile seams (a
// g = 1 grid then degenerates to one plain shared conv pass). Partition
// outputs are fused by sigmoid weight maps, unnormalized. With
// adaptive = false the weight maps are replaced by a fixed 1/n average and
// the fusion conv does not participate (its parameters stay in the model so
// both variants have the same checkpoint layout).
template <typename T>
Tensor<T> directional_conv(Tape<T>& tape, const Tensor<T>& x, const DirectionalConvParams<T>& p,
                           DcMode mode, int g, bool adaptive = true) {
  const Shape s = x.shape();
  if (s.h < g || s.w < g)
    shape_fail("directional_conv", "spatial size " + s.str() + " below grid " + std::to_string(g));
  if (p.conv.in_channels() != s.c || p.conv.out_channels() != s.c)
    shape_fail("directional_conv", "conv must map C -> C");
  PartitionSet ps = make_partition_set(g);
  const int n = static_cast<int>(ps.offsets.size());
  if (p.fusion.out_channels() != n || p.fusion.in_channels() != n * s.c)
    shape_fail("directional_conv", "fusion must map n*C -> n for n = " + std::to_string(n));
  CharacteristicSchedule sched = make_schedule(mode, g);

  std::vector<Tensor<T>> parts;
  parts.reserve(n);
  for (auto [dy, dx] : ps.offsets) {
    TilePad tp = make_tile_pad(g, s.h, s.w, dy, dx);
    Tensor<T> cur =
        pad2d(tape, x, tp.top, tp.ph - tp.top - s.h, tp.left, tp.pw - tp.left - s.w);
    for (const auto& m : sched.masks) {
      auto plane = std::make_shared<std::vector<std::uint8_t>>(
          static_cast<std::size_t>(tp.ph) * tp.pw);
      for (int y = 0; y < tp.ph; ++y)
        for (int xx = 0; xx < tp.pw; ++xx)
          (*plane)[static_cast<std::size_t>(y) * tp.pw + xx] =
              m[static_cast<std::size_t>(y % g) * g + xx % g];
      Tensor<T> y = conv2d(tape, cur, p.conv, 1);
      cur = masked_update(tape, y, cur,
                          std::shared_ptr<const std::vector<std::uint8_t>>(plane));
    }
    parts.push_back(crop2d(tape, cur, tp.top, tp.left, s.h, s.w));
  }

  if (!adaptive) {
    Tensor<T> sum;
    for (int i = 0; i < n; ++i) sum = i == 0 ? parts[i] : add(tape, sum, parts[i]);
    return scale(tape, sum, T(1) / static_cast<T>(n));
  }
  Tensor<T> cat = concat_channels(tape, parts);
  Tensor<T> weights = sigmoid(tape, conv2d(tape, cat, p.fusion, 1));
  Tensor<T> out;
  for (int i = 0; i < n; ++i) {
    Tensor<T> term = mul_plane(tape, parts[i], slice_channels(tape, weights, i, 1));
    out = i == 0 ? term : add(tape, out, term);
  }
  return out;
}

}  // namespace trb
