#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "trb/image.hpp"
#include "trb/rng.hpp"
#include "trb/schema.hpp"

namespace trb {

// Procedural capsule figure over the 14-joint tree. Edge arrays are indexed
// like KeypointSchema::skeleton_tree. Direction angles are absolute, measured
// from screen-down (+y); the unit vector is (sin a, cos a), so negating an
// angle mirrors it about the vertical axis.
struct GenConfig {
  int image_size = 256;
  float body_gray = 200.0f, bg_gray = 60.0f;
  float noise_amp = 4.0f;
  float scale_lo = 0.85f, scale_hi = 1.15f;
  float lean = 0.22f;     // global rotation half-range, radians
  float shift = 12.0f;    // neck translation half-range, px
  float width_jitter = 0.12f;  // relative half-width jitter

  // rest pose, per-edge swing half-range, segment lengths, half-widths
  std::array<float, 13> rest_angles;
  std::array<float, 13> swing;
  std::array<float, 13> lengths;
  std::array<float, 13> base_widths;

  GenConfig();
};

struct FigureSpec {
  std::array<float, 13> angles;       // absolute edge directions
  std::array<float, 13> lengths;      // segment lengths, px (scaled)
  std::array<float, 13> half_widths;  // capsule half-widths, px (scaled)
  float scale = 1.0f;
  float rotation = 0.0f;  // global, about the neck
  float tx = 0.0f, ty = 0.0f;
  float body_gray = 200.0f, bg_gray = 60.0f, noise_amp = 0.0f;
  std::uint64_t noise_seed = 0;
};

FigureSpec sample_figure(Rng& rng, const GenConfig& cfg);

// rest pose at scale 1, centered, noise-free; the base for handcrafted specs
FigureSpec rest_figure(const GenConfig& cfg);

// Left/right swapped and mirrored about the vertical axis; rendering the
// result matches flip_annotation of the original render.
FigureSpec mirror_spec(const FigureSpec& spec, const KeypointSchema& s);

std::array<std::array<float, 2>, 14> joint_positions(const FigureSpec& spec,
                                                     const KeypointSchema& s, int size);

struct RenderResult {
  ImageU8 image;  // grayscale
  PersonAnnotation anno;
};

// Anti-aliased capsules in a fixed far-to-near order. Skeleton keypoints are
// the joints; contour keypoints are the capsule boundary hits of the line
// through the joint perpendicular to its limb axis, medial on the side of
// the body midline. Keypoints under a nearer limb become Occluded; keypoints
// outside the frame become NotLabeled.
RenderResult render(const FigureSpec& spec, const KeypointSchema& s, int size = 256);

RenderResult generate_sample(std::uint64_t seed, const GenConfig& cfg, const KeypointSchema& s);

struct AugmentConfig {
  float max_rot_deg = 40.0f;
  float scale_lo = 0.7f, scale_hi = 1.3f;
  float flip_p = 0.5f;
};

// Deterministic core: optional flip, then rotate/scale about the bbox center
// (the person stays centered). Keypoints get the same affine map; the image
// is resampled bilinearly with edge clamping.
std::pair<ImageU8, PersonAnnotation> augment_with(const ImageU8& img, const PersonAnnotation& anno,
                                                  const KeypointSchema& s, float rot_rad,
                                                  bool flip, float scale);

std::pair<ImageU8, PersonAnnotation> augment(const ImageU8& img, const PersonAnnotation& anno,
                                             const KeypointSchema& s, Rng& rng,
                                             const AugmentConfig& cfg = {});

}  // namespace trb
