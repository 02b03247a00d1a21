#pragma once

#include <string>
#include <utility>
#include <vector>

#include "trb/dirconv.hpp"
#include "trb/ops.hpp"
#include "trb/schema.hpp"

namespace trb {

// Cross-branch refinement blocks. All three variants share one fusion form:
// the destination branch is concatenated with a message computed from the
// source branch and passed through a 1x1 conv. Both directions read the
// *input* maps, so neither output depends on the other.

template <typename T>
struct XsParams {
  ConvParams<T> transform_s2c, transform_c2s;  // 1x1 message transforms
  ConvParams<T> fuse_s, fuse_c;                // 1x1 over concat(dst, message)

  static XsParams make(int s_channels, int c_channels) {
    XsParams p;
    p.transform_s2c = ConvParams<T>::make(c_channels, s_channels, 1, 1);
    p.transform_c2s = ConvParams<T>::make(s_channels, c_channels, 1, 1);
    p.fuse_s = ConvParams<T>::make(s_channels, 2 * s_channels, 1, 1);
    p.fuse_c = ConvParams<T>::make(c_channels, 2 * c_channels, 1, 1);
    return p;
  }
  static XsParams he_init(int s_channels, int c_channels, Rng& rng) {
    XsParams p;
    p.transform_s2c = ConvParams<T>::he_init(c_channels, s_channels, 1, 1, rng);
    p.transform_c2s = ConvParams<T>::he_init(s_channels, c_channels, 1, 1, rng);
    p.fuse_s = ConvParams<T>::he_init(s_channels, 2 * s_channels, 1, 1, rng);
    p.fuse_c = ConvParams<T>::he_init(c_channels, 2 * c_channels, 1, 1, rng);
    return p;
  }
};

namespace detail {

template <typename T>
void require_1x1(const ConvParams<T>& p, const char* what) {
  if (p.weight.shape().h != 1 || p.weight.shape().w != 1)
    shape_fail("xs_block", std::string(what) + " kernel must be 1x1, got " +
                               p.weight.shape().str());
}

template <typename T>
void require_aligned(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
    shape_fail(op, "branch shapes " + sa.str() + " and " + sb.str() + " not aligned");
}

}  // namespace detail

template <typename T>
std::pair<Tensor<T>, Tensor<T>> xs_block(Tape<T>& tape, const Tensor<T>& ske_hm,
                                         const Tensor<T>& con_hm, const XsParams<T>& p) {
  detail::require_aligned("xs_block", ske_hm, con_hm);
  detail::require_1x1(p.transform_s2c, "transform_s2c");
  detail::require_1x1(p.transform_c2s, "transform_c2s");
  detail::require_1x1(p.fuse_s, "fuse_s");
  detail::require_1x1(p.fuse_c, "fuse_c");
  Tensor<T> msg_s2c = conv2d(tape, ske_hm, p.transform_s2c);
  Tensor<T> msg_c2s = conv2d(tape, con_hm, p.transform_c2s);
  Tensor<T> ske_ref = conv2d(tape, concat_channels(tape, {ske_hm, msg_c2s}), p.fuse_s);
  Tensor<T> con_ref = conv2d(tape, concat_channels(tape, {con_hm, msg_s2c}), p.fuse_c);
  return {ske_ref, con_ref};
}

// Directional-conv message passing. The skeleton lives inside the figure, so
// its message spreads inside-out (Scatter); the contour message collects
// outside-in (Gather). Modes sit in the params so a swapped parameter pair
// swaps the outputs exactly.
template <typename T>
struct DcMessageParams {
  DirectionalConvParams<T> dc_s2c, dc_c2s;
  DcMode mode_s2c = DcMode::Scatter;
  DcMode mode_c2s = DcMode::Gather;
  ConvParams<T> fuse_s, fuse_c;  // 1x1 over concat(dst, message)

  static DcMessageParams he_init(int s_channels, int c_channels, int k, int n_partitions,
                                 Rng& rng) {
    DcMessageParams p;
    p.dc_s2c = DirectionalConvParams<T>::he_init(s_channels, k, n_partitions, rng);
    p.dc_c2s = DirectionalConvParams<T>::he_init(c_channels, k, n_partitions, rng);
    p.fuse_s = ConvParams<T>::he_init(s_channels, s_channels + c_channels, 1, 1, rng);
    p.fuse_c = ConvParams<T>::he_init(c_channels, s_channels + c_channels, 1, 1, rng);
    return p;
  }
};

template <typename T>
std::pair<Tensor<T>, Tensor<T>> dc_message(Tape<T>& tape, const Tensor<T>& ske_feat,
                                           const Tensor<T>& con_feat,
                                           const DcMessageParams<T>& p, int g) {
  detail::require_aligned("dc_message", ske_feat, con_feat);
  Tensor<T> msg_s2c = directional_conv(tape, ske_feat, p.dc_s2c, p.mode_s2c, g);
  Tensor<T> msg_c2s = directional_conv(tape, con_feat, p.dc_c2s, p.mode_c2s, g);
  Tensor<T> ske_ref = conv2d(tape, concat_channels(tape, {ske_feat, msg_c2s}), p.fuse_s);
  Tensor<T> con_ref = conv2d(tape, concat_channels(tape, {con_feat, msg_s2c}), p.fuse_c);
  return {ske_ref, con_ref};
}

// Dense per-edge displacement fields. flow[i] maps the channel of edge
// endpoint a into endpoint b's frame, rev[i] the reverse; both are
// (batch, 2, H, W) with channel 0 = x offset, channel 1 = y offset.
template <typename T>
struct FlowFieldSet {
  std::vector<Tensor<T>> flow, rev;
  int n() const { return static_cast<int>(flow.size()); }
};

template <typename T>
struct PmParams {
  ConvParams<T> head1, head2;  // 3x3, relu after each
  ConvParams<T> head_out;      // 1x1 -> 4 channels per edge, no activation
  ConvParams<T> refine1, refine2;  // 1x1; relu between; refine2 -> n_keypoints

  static PmParams make(int in_channels, int hidden, int n_edges, int n_keypoints) {
    PmParams p;
    p.head1 = ConvParams<T>::make(hidden, in_channels, 3, 3);
    p.head2 = ConvParams<T>::make(hidden, hidden, 3, 3);
    p.head_out = ConvParams<T>::make(4 * n_edges, hidden, 1, 1);
    p.refine1 = ConvParams<T>::make(2 * n_keypoints, 2 * n_keypoints, 1, 1);
    p.refine2 = ConvParams<T>::make(n_keypoints, 2 * n_keypoints, 1, 1);
    return p;
  }
  static PmParams he_init(int in_channels, int hidden, int n_edges, int n_keypoints, Rng& rng) {
    PmParams p;
    p.head1 = ConvParams<T>::he_init(hidden, in_channels, 3, 3, rng);
    p.head2 = ConvParams<T>::he_init(hidden, hidden, 3, 3, rng);
    p.head_out = ConvParams<T>::he_init(4 * n_edges, hidden, 1, 1, rng);
    p.refine1 = ConvParams<T>::he_init(2 * n_keypoints, 2 * n_keypoints, 1, 1, rng);
    p.refine2 = ConvParams<T>::he_init(n_keypoints, 2 * n_keypoints, 1, 1, rng);
    return p;
  }
};

// Sets the refine convs so refined == coarse bit-for-bit regardless of the
// evidence: row j of refine1 picks +coarse_j, row K+j picks -coarse_j, and
// refine2 recombines relu(x) - relu(-x) = x. Training starts from a known
// drop-in state instead of a random perturbation of the coarse maps.
template <typename T>
void set_identity_refine(PmParams<T>& p, int n_keypoints) {
  const int k = n_keypoints;
  p.refine1 = ConvParams<T>::make(2 * k, 2 * k, 1, 1);
  p.refine2 = ConvParams<T>::make(k, 2 * k, 1, 1);
  for (int j = 0; j < k; ++j) {
    p.refine1.weight.at(j, j, 0, 0) = T(1);
    p.refine1.weight.at(k + j, j, 0, 0) = T(-1);
    p.refine2.weight.at(j, j, 0, 0) = T(1);
    p.refine2.weight.at(j, k + j, 0, 0) = T(-1);
  }
}

template <typename T>
FlowFieldSet<T> estimate_flows(Tape<T>& tape, const Tensor<T>& ske_feat,
                               const Tensor<T>& con_feat, const PmParams<T>& p,
                               const PairwiseGraph& graph) {
  detail::require_aligned("estimate_flows", ske_feat, con_feat);
  const int n_edges = static_cast<int>(graph.edges.size());
  if (p.head_out.weight.shape().n != 4 * n_edges)
    shape_fail("estimate_flows", "flow head emits " + std::to_string(p.head_out.weight.shape().n) +
                                     " channels, graph needs " + std::to_string(4 * n_edges));
  Tensor<T> x = concat_channels(tape, {ske_feat, con_feat});
  Tensor<T> h = relu(tape, conv2d(tape, x, p.head1));
  h = relu(tape, conv2d(tape, h, p.head2));
  Tensor<T> f = conv2d(tape, h, p.head_out);
  FlowFieldSet<T> out;
  out.flow.reserve(n_edges);
  out.rev.reserve(n_edges);
  for (int i = 0; i < n_edges; ++i) {
    out.flow.push_back(slice_channels(tape, f, 4 * i, 2));
    out.rev.push_back(slice_channels(tape, f, 4 * i + 2, 2));
  }
  return out;
}

// Sum over edges of the bidirectional warped squared error, each term summed
// over pixels and averaged over the batch. Warping samples with zero padding,
// so content pushed across the border leaves a residual; the loss is zero
// only when every warped source matches its target over the valid region.
template <typename T>
Tensor<T> pairwise_loss(Tape<T>& tape, const Tensor<T>& heatmaps, const FlowFieldSet<T>& flows,
                        const PairwiseGraph& graph) {
  if (static_cast<int>(graph.edges.size()) != flows.n())
    shape_fail("pairwise_loss", "flow set has " + std::to_string(flows.n()) + " edges, graph " +
                                    std::to_string(graph.edges.size()));
  const Shape hs = heatmaps.shape();
  Tensor<T> total;
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    const PairwiseEdge& e = graph.edges[i];
    if (e.a >= hs.c || e.b >= hs.c)
      shape_fail("pairwise_loss", "edge endpoint channel out of range for " + hs.str());
    Tensor<T> left = slice_channels(tape, heatmaps, e.a, 1);
    Tensor<T> right = slice_channels(tape, heatmaps, e.b, 1);
    Tensor<T> term = add(tape, mse_sum(tape, bilinear_sample(tape, left, flows.flow[i]), right),
                         mse_sum(tape, bilinear_sample(tape, right, flows.rev[i]), left));
    total = total.defined() ? add(tape, total, term) : term;
  }
  if (!total.defined()) total = Tensor<T>::scalar(T(0));
  return total;
}

// Evidence for keypoint j is the mean over graph neighbors of the neighbor's
// coarse channel warped along the connecting edge; isolated nodes get zero
// evidence. Refined maps keep the coarse channel count, so the output is a
// drop-in replacement for the coarse heatmaps.
template <typename T>
Tensor<T> pm_refine(Tape<T>& tape, const Tensor<T>& coarse, const FlowFieldSet<T>& flows,
                    const PairwiseGraph& graph, const PmParams<T>& p) {
  const Shape cs = coarse.shape();
  if (static_cast<int>(graph.edges.size()) != flows.n())
    shape_fail("pm_refine", "flow set has " + std::to_string(flows.n()) + " edges, graph " +
                                std::to_string(graph.edges.size()));
  std::vector<Tensor<T>> evidence(cs.c);
  std::vector<int> degree(cs.c, 0);
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    const PairwiseEdge& e = graph.edges[i];
    if (e.a >= cs.c || e.b >= cs.c)
      shape_fail("pm_refine", "edge endpoint channel out of range for " + cs.str());
    Tensor<T> to_b = bilinear_sample(tape, slice_channels(tape, coarse, e.a, 1), flows.flow[i]);
    Tensor<T> to_a = bilinear_sample(tape, slice_channels(tape, coarse, e.b, 1), flows.rev[i]);
    evidence[e.b] = evidence[e.b].defined() ? add(tape, evidence[e.b], to_b) : to_b;
    evidence[e.a] = evidence[e.a].defined() ? add(tape, evidence[e.a], to_a) : to_a;
    ++degree[e.a];
    ++degree[e.b];
  }
  std::vector<Tensor<T>> channels;
  channels.reserve(2 * cs.c);
  channels.push_back(coarse);
  for (int j = 0; j < cs.c; ++j) {
    if (!evidence[j].defined())
      evidence[j] = Tensor<T>::zeros(Shape{cs.n, 1, cs.h, cs.w});
    else if (degree[j] > 1)
      evidence[j] = scale(tape, evidence[j], T(1) / static_cast<T>(degree[j]));
    channels.push_back(evidence[j]);
  }
  Tensor<T> x = concat_channels(tape, channels);
  Tensor<T> refined = conv2d(tape, relu(tape, conv2d(tape, x, p.refine1)), p.refine2);
  if (refined.shape().c != cs.c)
    shape_fail("pm_refine", "refine emits " + std::to_string(refined.shape().c) +
                                " channels, expected " + std::to_string(cs.c));
  return refined;
}

}  // namespace trb
