#include "trb/schema.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace trb {

int KeypointSchema::id_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::invalid_argument("unknown keypoint name: " + name);
  return static_cast<int>(it - names.begin());
}

KeypointSchema default_schema() {
  KeypointSchema s;
  s.names = {"head_top", "neck", "l_shoulder", "r_shoulder", "l_elbow",  "r_elbow", "l_wrist",
             "r_wrist",  "l_hip", "r_hip",      "l_knee",     "r_knee",   "l_ankle", "r_ankle"};
  s.n_skeleton = 14;
  // triplets on shoulders through ankles; two contour ids appended per entry
  for (int k = 2; k < 14; ++k) {
    int med = static_cast<int>(s.names.size());
    s.names.push_back(s.names[k] + "_med");
    s.names.push_back(s.names[k] + "_lat");
    s.triplets.push_back({k, med, med + 1});
  }
  for (int k = 2; k < 14; k += 2) {
    s.left_right_pairs.emplace_back(k, k + 1);  // skeleton l/r
  }
  for (size_t t = 0; t + 1 < s.triplets.size(); t += 2) {
    // sides alternate (l, r) by construction; pair their contours role-wise
    s.left_right_pairs.emplace_back(s.triplets[t].medial, s.triplets[t + 1].medial);
    s.left_right_pairs.emplace_back(s.triplets[t].lateral, s.triplets[t + 1].lateral);
  }
  s.head_pair = {0, 1};
  s.torso_pair = {2, 9};  // left shoulder to right hip
  s.skeleton_tree = {{0, 1}, {1, 2}, {1, 3},  {2, 4},  {4, 6},   {3, 5},  {5, 7},
                     {1, 8}, {1, 9}, {8, 10}, {10, 12}, {9, 11}, {11, 13}};
  return s;
}

std::vector<std::string> validate_schema(const KeypointSchema& s) {
  std::vector<std::string> out;
  std::set<int> contour_seen;
  for (const auto& t : s.triplets) {
    if (t.medial == t.lateral)
      out.push_back("triplet of " + s.names[t.skeleton] + ": medial == lateral");
    for (int c : {t.medial, t.lateral}) {
      if (c < s.n_skeleton || c >= s.n_keypoints()) {
        out.push_back("triplet of " + s.names[t.skeleton] + ": contour id out of range");
        continue;
      }
      if (!contour_seen.insert(c).second)
        out.push_back("contour " + s.names[c] + " appears in more than one triplet");
    }
  }
  for (int c = s.n_skeleton; c < s.n_keypoints(); ++c)
    if (!contour_seen.count(c)) out.push_back("contour " + s.names[c] + " not in any triplet");
  for (auto [l, r] : s.left_right_pairs) {
    if (l == r) out.push_back("left/right pair maps " + s.names[l] + " to itself");
    for (auto [l2, r2] : s.left_right_pairs)
      if (l == r2 && r != l2) out.push_back("left/right pairs not involutive at " + s.names[l]);
  }
  if (s.skeleton_tree.size() + 1 != static_cast<size_t>(s.n_skeleton))
    out.push_back("skeleton tree edge count != n_skeleton - 1");
  return out;
}

PairwiseGraph build_graph(const KeypointSchema& s) {
  PairwiseGraph g;
  g.n_nodes = s.n_keypoints();
  auto add = [&](int a, int b, EdgeType t) {
    if (a > b) std::swap(a, b);
    g.edges.push_back({a, b, t});
  };
  auto triplet_of = [&](int skeleton_id) -> const Triplet* {
    for (const auto& t : s.triplets)
      if (t.skeleton == skeleton_id) return &t;
    return nullptr;
  };

  for (const auto& t : s.triplets) {
    add(t.medial, t.lateral, EdgeType::ContourContour);
    add(t.skeleton, t.medial, EdgeType::SkeletonContour);
    add(t.skeleton, t.lateral, EdgeType::SkeletonContour);
  }
  // adjacent triplets along limb chains: pairs of triplet-bearing keypoints
  // joined by a kinematic tree edge
  for (auto [a, b] : s.skeleton_tree) {
    const Triplet* ta = triplet_of(a);
    const Triplet* tb = triplet_of(b);
    if (ta && tb) {
      add(ta->medial, tb->medial, EdgeType::ContourContour);
      add(ta->lateral, tb->lateral, EdgeType::ContourContour);
    }
  }
  for (auto [a, b] : s.skeleton_tree) add(a, b, EdgeType::SkeletonSkeleton);

  std::sort(g.edges.begin(), g.edges.end(), [](const PairwiseEdge& x, const PairwiseEdge& y) {
    return std::tie(x.a, x.b) < std::tie(y.a, y.b);
  });
  for (size_t i = 0; i + 1 < g.edges.size(); ++i)
    if (g.edges[i].a == g.edges[i + 1].a && g.edges[i].b == g.edges[i + 1].b)
      throw std::logic_error("duplicate pairwise edge");
  return g;
}

std::vector<std::string> validate(const PersonAnnotation& a, const KeypointSchema& s,
                                  Protocol protocol, int img_w, int img_h, float margin) {
  std::vector<std::string> out;
  if (a.keypoints.size() != static_cast<size_t>(s.n_keypoints())) {
    out.push_back("keypoint count " + std::to_string(a.keypoints.size()) + " != schema " +
                  std::to_string(s.n_keypoints()));
    return out;
  }
  if (img_w > 0 && img_h > 0) {
    for (int i = 0; i < s.n_keypoints(); ++i) {
      const Keypoint& k = a.keypoints[i];
      if (!k.labeled()) continue;
      if (k.x < -margin || k.x > img_w - 1 + margin || k.y < -margin || k.y > img_h - 1 + margin)
        out.push_back(s.names[i] + " outside image bounds");
    }
  }
  for (const auto& t : s.triplets) {
    bool ske = a.keypoints[t.skeleton].labeled();
    bool med = a.keypoints[t.medial].labeled();
    bool lat = a.keypoints[t.lateral].labeled();
    if (protocol == Protocol::MpiiStyle) {
      if (ske && !(med && lat))
        out.push_back(s.names[t.skeleton] + " triplet: skeleton labeled but contour missing");
    } else {
      if (!ske && (med || lat))
        out.push_back(s.names[t.skeleton] + " triplet: contour labeled without its skeleton");
    }
  }
  return out;
}

PersonAnnotation flip_annotation(const PersonAnnotation& a, const KeypointSchema& s,
                                 int image_width) {
  PersonAnnotation out = a;
  for (auto& k : out.keypoints) k.x = static_cast<float>(image_width - 1) - k.x;
  for (auto [l, r] : s.left_right_pairs) std::swap(out.keypoints[l], out.keypoints[r]);
  out.bbox[0] = static_cast<float>(image_width) - a.bbox[0] - a.bbox[2];
  return out;
}

// ---------------------------------------------------------------------------
// JSON serialization

using nlohmann::json;

static json schema_to_json(const KeypointSchema& s) {
  json j;
  j["names"] = s.names;
  j["n_skeleton"] = s.n_skeleton;
  json trip = json::array();
  for (const auto& t : s.triplets) trip.push_back({t.skeleton, t.medial, t.lateral});
  j["triplets"] = trip;
  j["left_right_pairs"] = s.left_right_pairs;
  j["head_pair"] = s.head_pair;
  j["torso_pair"] = s.torso_pair;
  j["skeleton_tree"] = s.skeleton_tree;
  return j;
}

static KeypointSchema schema_from_json(const json& j) {
  KeypointSchema s;
  s.names = j.at("names").get<std::vector<std::string>>();
  s.n_skeleton = j.at("n_skeleton").get<int>();
  for (const auto& t : j.at("triplets")) s.triplets.push_back({t.at(0), t.at(1), t.at(2)});
  s.left_right_pairs = j.at("left_right_pairs").get<std::vector<std::pair<int, int>>>();
  s.head_pair = j.at("head_pair").get<std::pair<int, int>>();
  s.torso_pair = j.at("torso_pair").get<std::pair<int, int>>();
  s.skeleton_tree = j.at("skeleton_tree").get<std::vector<std::pair<int, int>>>();
  return s;
}

std::string dataset_to_json(const Dataset& ds) {
  json j;
  j["schema"] = schema_to_json(ds.schema);
  json anns = json::array();
  for (const auto& a : ds.annotations) {
    json ja;
    ja["image_id"] = a.image_id;
    ja["bbox"] = a.bbox;
    json kps;
    for (size_t i = 0; i < a.keypoints.size(); ++i) {
      const Keypoint& k = a.keypoints[i];
      kps[std::to_string(i)] = {k.x, k.y, static_cast<int>(k.v)};
    }
    ja["keypoints"] = kps;
    anns.push_back(std::move(ja));
  }
  j["annotations"] = anns;
  return j.dump(1);
}

Dataset dataset_from_json(const std::string& text) {
  json j = json::parse(text);
  Dataset ds;
  ds.schema = schema_from_json(j.at("schema"));
  for (const auto& ja : j.at("annotations")) {
    PersonAnnotation a;
    a.image_id = ja.at("image_id").get<std::string>();
    a.bbox = ja.at("bbox").get<std::array<float, 4>>();
    a.keypoints.assign(ds.schema.n_keypoints(), Keypoint{});
    for (const auto& [key, val] : ja.at("keypoints").items()) {
      int id = std::stoi(key);
      a.keypoints.at(id) = {val.at(0).get<float>(), val.at(1).get<float>(),
                            static_cast<Visibility>(val.at(2).get<int>())};
    }
    ds.annotations.push_back(std::move(a));
  }
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << dataset_to_json(ds);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return dataset_from_json(ss.str());
}

}  // namespace trb
