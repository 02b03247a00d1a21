#pragma once

#include "trb/image.hpp"
#include "trb/schema.hpp"

namespace trb {

// Fixed overlay palette. Keypoint discs are drawn last so the disc color is
// what a probe at the keypoint pixel sees.
inline constexpr Rgb kSkeletonColor{255, 0, 0};
inline constexpr Rgb kMedialColor{0, 0, 255};
inline constexpr Rgb kLateralColor{0, 255, 0};
inline constexpr Rgb kBoneColor{255, 0, 0};
inline constexpr Rgb kTripletColor{255, 255, 255};

// Draws bones along the kinematic tree, one white connector per triplet
// (medial to lateral, passing through the skeleton keypoint), and colored
// discs for every labeled keypoint. Unlabeled endpoints suppress their
// lines. Accepts gray or rgb scenes; returns rgb.
ImageU8 render_overlay(const ImageU8& scene, const PersonAnnotation& anno,
                       const KeypointSchema& s, float disc_radius = 2.0f);

}  // namespace trb
