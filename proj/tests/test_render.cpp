#include <cmath>

#include "doctest.h"
#include "trb/render.hpp"
#include "trb/synth.hpp"

using namespace trb;

TEST_SUITE_BEGIN("render");

namespace {

bool pixel_is(const ImageU8& img, int y, int x, Rgb c) {
  return img.at(y, x, 0) == c[0] && img.at(y, x, 1) == c[1] && img.at(y, x, 2) == c[2];
}

}  // namespace

TEST_CASE("overlays use the documented palette at keypoint pixels") {
  KeypointSchema s = default_schema();
  auto sample = generate_sample(321, GenConfig{}, s);
  ImageU8 rgb = render_overlay(sample.image, sample.anno, s);
  CHECK(rgb.channels == 3);
  CHECK(rgb.w == sample.image.w);
  CHECK(rgb.h == sample.image.h);

  int ske_hits = 0, med_hits = 0, lat_hits = 0;
  for (const Triplet& t : s.triplets) {
    const Keypoint& ks = sample.anno.keypoints[t.skeleton];
    const Keypoint& km = sample.anno.keypoints[t.medial];
    const Keypoint& kl = sample.anno.keypoints[t.lateral];
    if (ks.labeled() && pixel_is(rgb, std::lround(ks.y), std::lround(ks.x), kSkeletonColor))
      ++ske_hits;
    if (km.labeled() && pixel_is(rgb, std::lround(km.y), std::lround(km.x), kMedialColor))
      ++med_hits;
    if (kl.labeled() && pixel_is(rgb, std::lround(kl.y), std::lround(kl.x), kLateralColor))
      ++lat_hits;
  }
  // discs can overlap a neighboring keypoint's disc, so most, not all,
  // probes must see their own color
  CHECK(ske_hits >= 10);
  CHECK(med_hits >= 10);
  CHECK(lat_hits >= 10);
}

TEST_CASE("triplet connectors pass through their skeleton keypoint") {
  KeypointSchema s = default_schema();
  auto sample = generate_sample(654, GenConfig{}, s);
  // redraw with zero-radius discs so connector lines stay visible
  ImageU8 rgb = render_overlay(sample.image, sample.anno, s, 0.0f);
  int checked = 0;
  for (const Triplet& t : s.triplets) {
    const Keypoint& ks = sample.anno.keypoints[t.skeleton];
    if (!ks.labeled() || !sample.anno.keypoints[t.medial].labeled() ||
        !sample.anno.keypoints[t.lateral].labeled())
      continue;
    // collinearity puts the white line within one pixel of the skeleton point
    bool near_white = false;
    const int cy = static_cast<int>(std::lround(ks.y));
    const int cx = static_cast<int>(std::lround(ks.x));
    for (int dy = -1; dy <= 1 && !near_white; ++dy)
      for (int dx = -1; dx <= 1 && !near_white; ++dx)
        if (rgb.inside(cy + dy, cx + dx))
          near_white = pixel_is(rgb, cy + dy, cx + dx, kTripletColor);
    CHECK(near_white);
    ++checked;
  }
  CHECK(checked >= 8);
}

TEST_CASE("unlabeled endpoints suppress their marks") {
  KeypointSchema s = default_schema();
  auto sample = generate_sample(987, GenConfig{}, s);
  const Triplet t = s.triplets[2];  // an elbow triplet
  PersonAnnotation anno = sample.anno;
  anno.keypoints[t.medial].v = Visibility::NotLabeled;
  ImageU8 rgb = render_overlay(sample.image, anno, s);
  const Keypoint& km = sample.anno.keypoints[t.medial];
  CHECK(!pixel_is(rgb, std::lround(km.y), std::lround(km.x), kMedialColor));
  ImageU8 rgb_full = render_overlay(sample.image, sample.anno, s);
  CHECK(pixel_is(rgb_full, std::lround(km.y), std::lround(km.x), kMedialColor));

  PersonAnnotation bad = sample.anno;
  bad.keypoints.pop_back();
  CHECK_THROWS_AS(render_overlay(sample.image, bad, s), std::invalid_argument);
}

TEST_SUITE_END();
