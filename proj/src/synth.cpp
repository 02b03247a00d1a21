#include "trb/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace trb {

namespace {

constexpr int kEdges = 13;
constexpr float kPi = 3.14159265358979323846f;

// edges listed as in KeypointSchema::skeleton_tree:
//  0 (0,1) head   1 (1,2) l_clav  2 (1,3) r_clav  3 (2,4) l_uarm
//  4 (4,6) l_farm 5 (3,5) r_uarm  6 (5,7) r_farm  7 (1,8) l_torso
//  8 (1,9) r_torso 9 (8,10) l_thigh 10 (10,12) l_calf
// 11 (9,11) r_thigh 12 (11,13) r_calf
constexpr int kChild[kEdges] = {0, 2, 3, 4, 6, 5, 7, 8, 9, 10, 12, 11, 13};
constexpr int kParent[kEdges] = {1, 1, 1, 2, 4, 3, 5, 1, 1, 8, 10, 9, 11};

// same-sided edge pairs, used by mirror_spec
constexpr int kMirrorEdge[kEdges] = {0, 2, 1, 5, 6, 3, 4, 8, 7, 11, 12, 9, 10};

// far-to-near compositing order: torso, clavicles, head, legs, arms
constexpr int kDrawOrder[kEdges] = {7, 8, 1, 2, 0, 9, 11, 10, 12, 3, 5, 4, 6};

int draw_rank(int edge) {
  for (int i = 0; i < kEdges; ++i)
    if (kDrawOrder[i] == edge) return i;
  return -1;
}

float seg_dist(float px, float py, float ax, float ay, float bx, float by) {
  const float vx = bx - ax, vy = by - ay;
  const float len2 = vx * vx + vy * vy;
  float t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0f;
  t = std::clamp(t, 0.0f, 1.0f);
  const float qx = ax + t * vx, qy = ay + t * vy;
  return std::hypot(px - qx, py - qy);
}

struct Capsule {
  float ax, ay, bx, by, hw;
  float sdf(float x, float y) const { return seg_dist(x, y, ax, ay, bx, by) - hw; }
};

int parent_edge_of(int joint) {
  for (int e = 0; e < kEdges; ++e)
    if (kChild[e] == joint) return e;
  return 0;  // the neck root falls back to the head edge
}

}  // namespace

GenConfig::GenConfig() {
  //              head  l_clv r_clv l_ua  l_fa  r_ua  r_fa  l_to  r_to  l_th  l_ca  r_th  r_ca
  rest_angles = {kPi,   1.85f, -1.85f, 0.38f, 0.30f, -0.38f, -0.30f,
                 0.27f, -0.27f, 0.09f, 0.06f, -0.09f, -0.06f};
  swing = {0.14f, 0.10f, 0.10f, 0.85f, 0.75f, 0.85f, 0.75f,
           0.10f, 0.10f, 0.40f, 0.32f, 0.40f, 0.32f};
  lengths = {26.0f, 26.0f, 26.0f, 36.0f, 32.0f, 36.0f, 32.0f,
             58.0f, 58.0f, 42.0f, 40.0f, 42.0f, 40.0f};
  base_widths = {13.0f, 10.0f, 10.0f, 7.0f, 5.5f, 7.0f, 5.5f,
                 15.0f, 15.0f, 9.0f, 7.0f, 9.0f, 7.0f};
}

FigureSpec sample_figure(Rng& rng, const GenConfig& cfg) {
  FigureSpec f;
  f.scale = static_cast<float>(rng.uniform(cfg.scale_lo, cfg.scale_hi));
  f.rotation = static_cast<float>(rng.uniform(-cfg.lean, cfg.lean));
  f.tx = static_cast<float>(rng.uniform(-cfg.shift, cfg.shift));
  f.ty = static_cast<float>(rng.uniform(-cfg.shift, cfg.shift));
  for (int e = 0; e < kEdges; ++e) {
    f.angles[e] =
        cfg.rest_angles[e] + static_cast<float>(rng.uniform(-cfg.swing[e], cfg.swing[e]));
    f.lengths[e] = cfg.lengths[e] * f.scale;
    f.half_widths[e] =
        cfg.base_widths[e] * f.scale *
        (1.0f + static_cast<float>(rng.uniform(-cfg.width_jitter, cfg.width_jitter)));
  }
  f.body_gray = cfg.body_gray;
  f.bg_gray = cfg.bg_gray;
  f.noise_amp = cfg.noise_amp;
  return f;
}

FigureSpec rest_figure(const GenConfig& cfg) {
  FigureSpec f;
  f.angles = cfg.rest_angles;
  f.lengths = cfg.lengths;
  f.half_widths = cfg.base_widths;
  f.body_gray = cfg.body_gray;
  f.bg_gray = cfg.bg_gray;
  return f;
}

FigureSpec mirror_spec(const FigureSpec& spec, const KeypointSchema&) {
  FigureSpec m = spec;
  m.rotation = -spec.rotation;
  m.tx = -spec.tx;
  for (int e = 0; e < kEdges; ++e) {
    m.angles[e] = -spec.angles[kMirrorEdge[e]];
    m.lengths[e] = spec.lengths[kMirrorEdge[e]];
    m.half_widths[e] = spec.half_widths[kMirrorEdge[e]];
  }
  return m;
}

std::array<std::array<float, 2>, 14> joint_positions(const FigureSpec& spec,
                                                     const KeypointSchema& s, int size) {
  if (s.n_skeleton != 14 || s.skeleton_tree.size() != kEdges)
    throw std::invalid_argument("joint_positions: schema is not the 14-joint tree");
  std::array<std::array<float, 2>, 14> local{};
  local[1] = {0.0f, 0.0f};  // neck root
  // edges are listed parents-first, one pass suffices
  for (int e = 0; e < kEdges; ++e) {
    const float len = spec.lengths[e];
    const float a = spec.angles[e];
    local[kChild[e]] = {local[kParent[e]][0] + len * std::sin(a),
                        local[kParent[e]][1] + len * std::cos(a)};
  }
  const float cr = std::cos(spec.rotation), sr = std::sin(spec.rotation);
  const float cx = (size - 1) * 0.5f + spec.tx;
  const float cy = (size - 1) * 0.34f + spec.ty;
  std::array<std::array<float, 2>, 14> out{};
  for (int j = 0; j < 14; ++j) {
    const float x = local[j][0], y = local[j][1];
    out[j] = {cx + cr * x - sr * y, cy + sr * x + cr * y};
  }
  return out;
}

RenderResult render(const FigureSpec& spec, const KeypointSchema& s, int size) {
  for (int e = 0; e < kEdges; ++e) {
    if (spec.lengths[e] <= 1e-3f)
      throw std::invalid_argument("render: degenerate zero-length limb " + std::to_string(e));
    if (spec.half_widths[e] <= 0.0f)
      throw std::invalid_argument("render: non-positive half-width at limb " + std::to_string(e));
  }
  auto joints = joint_positions(spec, s, size);

  std::array<Capsule, kEdges> caps;
  for (int e = 0; e < kEdges; ++e)
    caps[e] = {joints[kParent[e]][0], joints[kParent[e]][1], joints[kChild[e]][0],
               joints[kChild[e]][1], spec.half_widths[e]};

  ImageU8 img = ImageU8::make(size, size, 1);
  std::vector<float> canvas(static_cast<std::size_t>(size) * size, spec.bg_gray);
  for (int oi = 0; oi < kEdges; ++oi) {
    const Capsule& c = caps[kDrawOrder[oi]];
    const int lo_x = std::max(0, static_cast<int>(std::floor(std::min(c.ax, c.bx) - c.hw - 1)));
    const int hi_x =
        std::min(size - 1, static_cast<int>(std::ceil(std::max(c.ax, c.bx) + c.hw + 1)));
    const int lo_y = std::max(0, static_cast<int>(std::floor(std::min(c.ay, c.by) - c.hw - 1)));
    const int hi_y =
        std::min(size - 1, static_cast<int>(std::ceil(std::max(c.ay, c.by) + c.hw + 1)));
    for (int y = lo_y; y <= hi_y; ++y)
      for (int x = lo_x; x <= hi_x; ++x) {
        const float cov = std::clamp(0.5f - c.sdf(static_cast<float>(x), static_cast<float>(y)),
                                     0.0f, 1.0f);
        if (cov > 0)
          canvas[static_cast<std::size_t>(y) * size + x] =
              cov * spec.body_gray + (1.0f - cov) * canvas[static_cast<std::size_t>(y) * size + x];
      }
  }
  Rng noise(spec.noise_seed);
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    float v = canvas[i];
    if (spec.noise_amp > 0)
      v += static_cast<float>(noise.uniform(-spec.noise_amp, spec.noise_amp));
    img.data[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0f, 255.0f) + 0.5f);
  }

  // Medial sides are resolved in the local frame, against the vertical body
  // axis through the neck, before the global lean is applied. Deciding on
  // leaned coordinates is unstable for the shoulder: its two candidates are
  // exactly equidistant from any line through the neck.
  std::array<std::array<float, 2>, 14> loc{};
  loc[1] = {0.0f, 0.0f};
  for (int e = 0; e < kEdges; ++e) {
    loc[kChild[e]] = {loc[kParent[e]][0] + spec.lengths[e] * std::sin(spec.angles[e]),
                      loc[kParent[e]][1] + spec.lengths[e] * std::cos(spec.angles[e])};
  }

  PersonAnnotation anno;
  anno.image_id = "";
  anno.keypoints.assign(s.n_keypoints(), Keypoint{0, 0, Visibility::NotLabeled});

  auto visibility = [&](float x, float y, int own_edge) {
    if (x < 0 || x > size - 1 || y < 0 || y > size - 1) return Visibility::NotLabeled;
    const int rank = draw_rank(own_edge);
    for (int oi = rank + 1; oi < kEdges; ++oi)
      if (caps[kDrawOrder[oi]].sdf(x, y) < -0.5f) return Visibility::Occluded;
    return Visibility::Visible;
  };

  for (int j = 0; j < 14; ++j) {
    const float x = joints[j][0], y = joints[j][1];
    anno.keypoints[j] = {x, y, visibility(x, y, parent_edge_of(j))};
  }
  for (const auto& t : s.triplets) {
    const int e = parent_edge_of(t.skeleton);
    const float axx = joints[kChild[e]][0] - joints[kParent[e]][0];
    const float axy = joints[kChild[e]][1] - joints[kParent[e]][1];
    const float len = std::hypot(axx, axy);
    const float nx = -axy / len, ny = axx / len;
    const float jx = joints[t.skeleton][0], jy = joints[t.skeleton][1];
    const float hw = spec.half_widths[e];
    const float px = jx + nx * hw, py = jy + ny * hw;
    const float qx = jx - nx * hw, qy = jy - ny * hw;
    // local-frame candidates; the rotation that maps local to global commutes
    // with the perpendicular, so the +/- labels correspond
    const float a = spec.angles[e];
    const float ljx = loc[t.skeleton][0], ljy = loc[t.skeleton][1];
    const float plx = ljx - std::cos(a) * hw, ply = ljy + std::sin(a) * hw;
    const float qlx = ljx + std::cos(a) * hw, qly = ljy - std::sin(a) * hw;
    bool p_is_medial;
    if (std::abs(plx) != std::abs(qlx)) {
      p_is_medial = std::abs(plx) < std::abs(qlx);
    } else {
      p_is_medial = ply < qly;  // exact tie: medial points toward the head
    }
    const float mx_ = p_is_medial ? px : qx, my_ = p_is_medial ? py : qy;
    const float lx_ = p_is_medial ? qx : px, ly_ = p_is_medial ? qy : py;
    anno.keypoints[t.medial] = {mx_, my_, visibility(mx_, my_, e)};
    anno.keypoints[t.lateral] = {lx_, ly_, visibility(lx_, ly_, e)};
  }

  float bb_x0 = 1e9f, bb_y0 = 1e9f, bb_x1 = -1e9f, bb_y1 = -1e9f;
  for (const Capsule& c : caps) {
    bb_x0 = std::min({bb_x0, c.ax - c.hw, c.bx - c.hw});
    bb_x1 = std::max({bb_x1, c.ax + c.hw, c.bx + c.hw});
    bb_y0 = std::min({bb_y0, c.ay - c.hw, c.by - c.hw});
    bb_y1 = std::max({bb_y1, c.ay + c.hw, c.by + c.hw});
  }
  bb_x0 = std::max(bb_x0, 0.0f);
  bb_y0 = std::max(bb_y0, 0.0f);
  bb_x1 = std::min(bb_x1, static_cast<float>(size - 1));
  bb_y1 = std::min(bb_y1, static_cast<float>(size - 1));
  anno.bbox = {bb_x0, bb_y0, bb_x1 - bb_x0, bb_y1 - bb_y0};
  return {std::move(img), std::move(anno)};
}

RenderResult generate_sample(std::uint64_t seed, const GenConfig& cfg, const KeypointSchema& s) {
  Rng rng(seed);
  FigureSpec f = sample_figure(rng, cfg);
  f.noise_seed = seed ^ 0x9e3779b97f4a7c15ull;
  return render(f, s, cfg.image_size);
}

std::pair<ImageU8, PersonAnnotation> augment_with(const ImageU8& img, const PersonAnnotation& anno,
                                                  const KeypointSchema& s, float rot_rad,
                                                  bool flip, float scale) {
  if (!flip && rot_rad == 0.0f && scale == 1.0f) return {img, anno};
  ImageU8 src = img;
  PersonAnnotation a = anno;
  if (flip) {
    a = flip_annotation(a, s, img.w);
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) src.at(y, x) = img.at(y, img.w - 1 - x);
  }
  const float cx = a.bbox[0] + 0.5f * a.bbox[2];
  const float cy = a.bbox[1] + 0.5f * a.bbox[3];
  const float cr = std::cos(rot_rad), sr = std::sin(rot_rad);

  ImageU8 out = ImageU8::make(img.w, img.h, img.channels);
  // inverse map with edge clamping; identity parameters copy bytes exactly
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const float dx = x - cx, dy = y - cy;
      const float sx = (cr * dx + sr * dy) / scale + cx;
      const float sy = (-sr * dx + cr * dy) / scale + cy;
      const float fx = std::clamp(sx, 0.0f, static_cast<float>(img.w - 1));
      const float fy = std::clamp(sy, 0.0f, static_cast<float>(img.h - 1));
      const int x0 = std::max(0, std::min(static_cast<int>(fx), img.w - 2));
      const int y0 = std::max(0, std::min(static_cast<int>(fy), img.h - 2));
      const float wx = fx - x0, wy = fy - y0;
      for (int c = 0; c < img.channels; ++c) {
        const float v00 = src.at(y0, x0, c), v01 = src.at(y0, x0 + 1, c);
        const float v10 = src.at(y0 + 1, x0, c), v11 = src.at(y0 + 1, x0 + 1, c);
        const float v = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0f, 255.0f) + 0.5f);
      }
    }

  for (auto& k : a.keypoints) {
    if (k.v == Visibility::NotLabeled) continue;
    const float dx = k.x - cx, dy = k.y - cy;
    k.x = scale * (cr * dx - sr * dy) + cx;
    k.y = scale * (sr * dx + cr * dy) + cy;
    if (k.x < 0 || k.x > img.w - 1 || k.y < 0 || k.y > img.h - 1) k.v = Visibility::NotLabeled;
  }
  // bbox: transformed corner hull
  const float x0 = a.bbox[0], y0 = a.bbox[1], x1 = x0 + a.bbox[2], y1 = y0 + a.bbox[3];
  float nx0 = 1e9f, ny0 = 1e9f, nx1 = -1e9f, ny1 = -1e9f;
  for (auto [px, py] : {std::pair{x0, y0}, {x1, y0}, {x0, y1}, {x1, y1}}) {
    const float dx = px - cx, dy = py - cy;
    const float tx = scale * (cr * dx - sr * dy) + cx;
    const float ty = scale * (sr * dx + cr * dy) + cy;
    nx0 = std::min(nx0, tx);
    ny0 = std::min(ny0, ty);
    nx1 = std::max(nx1, tx);
    ny1 = std::max(ny1, ty);
  }
  a.bbox = {nx0, ny0, nx1 - nx0, ny1 - ny0};
  return {std::move(out), std::move(a)};
}

std::pair<ImageU8, PersonAnnotation> augment(const ImageU8& img, const PersonAnnotation& anno,
                                             const KeypointSchema& s, Rng& rng,
                                             const AugmentConfig& cfg) {
  // fixed draw order keeps the stream position independent of the values
  const float rot = static_cast<float>(
      rng.uniform(-cfg.max_rot_deg * kPi / 180.0, cfg.max_rot_deg * kPi / 180.0));
  const bool flip = rng.bernoulli(cfg.flip_p);
  const float scale = static_cast<float>(rng.uniform(cfg.scale_lo, cfg.scale_hi));
  return augment_with(img, anno, s, rot, flip, scale);
}

}  // namespace trb
