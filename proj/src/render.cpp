#include "trb/render.hpp"

#include <stdexcept>
#include <vector>

namespace trb {

ImageU8 render_overlay(const ImageU8& scene, const PersonAnnotation& anno,
                       const KeypointSchema& s, float disc_radius) {
  if (anno.keypoints.size() != static_cast<std::size_t>(s.n_keypoints()))
    throw std::invalid_argument("render_overlay: annotation carries " +
                                std::to_string(anno.keypoints.size()) + " keypoints, schema " +
                                std::to_string(s.n_keypoints()));
  ImageU8 rgb = scene.channels == 3 ? scene : gray_to_rgb(scene);

  auto labeled = [&](int id) { return anno.keypoints[id].labeled(); };
  for (const auto& [a, b] : s.skeleton_tree) {
    if (!labeled(a) || !labeled(b)) continue;
    draw_line(rgb, anno.keypoints[a].x, anno.keypoints[a].y, anno.keypoints[b].x,
              anno.keypoints[b].y, kBoneColor);
  }
  for (const Triplet& t : s.triplets) {
    if (!labeled(t.medial) || !labeled(t.lateral)) continue;
    draw_line(rgb, anno.keypoints[t.medial].x, anno.keypoints[t.medial].y,
              anno.keypoints[t.lateral].x, anno.keypoints[t.lateral].y, kTripletColor);
  }
  std::vector<bool> medial(s.n_keypoints(), false);
  for (const Triplet& t : s.triplets) medial[t.medial] = true;
  for (int id = 0; id < s.n_keypoints(); ++id) {
    if (!labeled(id)) continue;
    const Rgb color =
        s.is_skeleton(id) ? kSkeletonColor : (medial[id] ? kMedialColor : kLateralColor);
    draw_disc(rgb, anno.keypoints[id].x, anno.keypoints[id].y, disc_radius, color);
  }
  return rgb;
}

}  // namespace trb
