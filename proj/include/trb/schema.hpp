#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace trb {

enum class Visibility { NotLabeled = 0, Occluded = 1, Visible = 2 };

struct Keypoint {
  float x = 0;
  float y = 0;
  Visibility v = Visibility::NotLabeled;

  bool labeled() const { return v != Visibility::NotLabeled; }
};

// One skeleton keypoint with its medial/lateral contour companions.
struct Triplet {
  int skeleton = -1;
  int medial = -1;
  int lateral = -1;
};

struct KeypointSchema {
  std::vector<std::string> names;  // index = keypoint id; skeleton ids first
  int n_skeleton = 0;
  std::vector<Triplet> triplets;
  std::vector<std::pair<int, int>> left_right_pairs;  // (left id, right id)
  std::pair<int, int> head_pair{-1, -1};   // head size reference (PCKh)
  std::pair<int, int> torso_pair{-1, -1};  // torso size reference (PCK)
  std::vector<std::pair<int, int>> skeleton_tree;  // kinematic tree edges

  int n_keypoints() const { return static_cast<int>(names.size()); }
  int n_contour() const { return n_keypoints() - n_skeleton; }
  bool is_skeleton(int id) const { return id < n_skeleton; }
  int id_of(const std::string& name) const;
};

struct PersonAnnotation {
  std::string image_id;
  std::vector<Keypoint> keypoints;     // indexed by keypoint id
  std::array<float, 4> bbox{0, 0, 0, 0};  // x, y, w, h in px
};

enum class EdgeType { ContourContour, SkeletonContour, SkeletonSkeleton };

struct PairwiseEdge {
  int a = -1;
  int b = -1;
  EdgeType type = EdgeType::ContourContour;
};

// Undirected, no self loops or duplicates; single-person scope.
struct PairwiseGraph {
  int n_nodes = 0;
  std::vector<PairwiseEdge> edges;
};

enum class Protocol { MpiiStyle, CocoStyle };

// The canonical 14-skeleton / 24-contour figure: triplets on the 12
// shoulder-through-ankle keypoints, none on head-top or neck.
KeypointSchema default_schema();

// Invariant check for hand-built or loaded schemas; empty result means valid.
std::vector<std::string> validate_schema(const KeypointSchema& s);

// Edge rules: medial<->lateral inside each triplet; medial-medial and
// lateral-lateral between adjacent triplets along a limb chain; skeleton to
// both its contours; the skeleton kinematic tree.
PairwiseGraph build_graph(const KeypointSchema& s);

// Violations are data, not errors. img_w/img_h <= 0 skips the bounds check.
std::vector<std::string> validate(const PersonAnnotation& a, const KeypointSchema& s,
                                  Protocol protocol, int img_w = -1, int img_h = -1,
                                  float margin = 0.0f);

// Mirror across the vertical axis: x -> width-1-x, left/right identities
// swapped whole-triplet; medial stays medial, lateral stays lateral.
PersonAnnotation flip_annotation(const PersonAnnotation& a, const KeypointSchema& s,
                                 int image_width);

struct Dataset {
  KeypointSchema schema;
  std::vector<PersonAnnotation> annotations;
};

std::string dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const std::string& text);
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

}  // namespace trb
