#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <utility>
#include <vector>

#include "trb/common.hpp"

namespace trb {

enum class DcMode { Gather, Scatter };

// K = ceil(g/2) disjoint g-by-g binary masks covering the block. Gather
// orders them outermost ring first; Scatter is the exact reversal.
struct CharacteristicSchedule {
  int g = 0;
  DcMode mode = DcMode::Gather;
  std::vector<std::vector<std::uint8_t>> masks;  // K entries of g*g cells

  int iterations() const { return static_cast<int>(masks.size()); }
};

// Ring index of a cell: Chebyshev distance to the block center. For even g
// the center is the 2x2 central cell group and the distance is taken to the
// nearest of its cells.
inline int ring_index(int g, int y, int x) {
  auto axis = [g](int v) {
    if (g % 2 == 1) return std::abs(v - (g - 1) / 2);
    int lo = g / 2 - 1, hi = g / 2;
    if (v < lo) return lo - v;
    if (v > hi) return v - hi;
    return 0;
  };
  int dy = axis(y), dx = axis(x);
  return dy > dx ? dy : dx;
}

inline CharacteristicSchedule make_schedule(DcMode mode, int g) {
  if (g < 1) shape_fail("make_schedule", "grid size must be >= 1");
  const int K = (g + 1) / 2;
  CharacteristicSchedule s;
  s.g = g;
  s.mode = mode;
  s.masks.assign(K, std::vector<std::uint8_t>(static_cast<std::size_t>(g) * g, 0));
  for (int y = 0; y < g; ++y)
    for (int x = 0; x < g; ++x) {
      int r = ring_index(g, y, x);  // in [0, K-1]
      int k = K - 1 - r;            // Gather: outermost ring first
      s.masks[k][static_cast<std::size_t>(y) * g + x] = 1;
    }
  if (mode == DcMode::Scatter) std::reverse(s.masks.begin(), s.masks.end());
  return s;
}

// Grid partition points {0, floor(g/2)}^2, deduplicated; 4 offsets for
// g >= 2, a single (0,0) for g = 1.
struct PartitionSet {
  int g = 0;
  std::vector<std::pair<int, int>> offsets;  // (dy, dx)
};

inline PartitionSet make_partition_set(int g) {
  if (g < 1) shape_fail("make_partition_set", "grid size must be >= 1");
  PartitionSet ps;
  ps.g = g;
  const int m = g / 2;
  ps.offsets = {{0, 0}, {0, m}, {m, 0}, {m, m}};
  if (m == 0) ps.offsets.resize(1);
  return ps;
}

// Zero padding that aligns tile boundaries with an offset anchor and rounds
// the map up to whole tiles. A pixel at row r lands at in-tile row
// (r - dy) mod g.
struct TilePad {
  int top = 0, left = 0, ph = 0, pw = 0;
};

inline TilePad make_tile_pad(int g, int h, int w, int dy, int dx) {
  TilePad t;
  t.top = (g - dy) % g;
  t.left = (g - dx) % g;
  t.ph = (t.top + h + g - 1) / g * g;
  t.pw = (t.left + w + g - 1) / g * g;
  return t;
}

}  // namespace trb
