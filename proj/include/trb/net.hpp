#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "trb/blocks.hpp"
#include "trb/dirconv.hpp"
#include "trb/ops.hpp"
#include "trb/schema.hpp"

namespace trb {

enum class BranchMode { SkeletonOnly, ContourOnly, Multitask };
enum class MpMode { None, Xs, NormalConv, DcNoAdaptive, Dc, Pm, DcPm };

std::string to_string(BranchMode m);
std::string to_string(MpMode m);
BranchMode branch_mode_from(const std::string& s);
MpMode mp_mode_from(const std::string& s);

struct NetConfig {
  int n_stacks = 2;
  int base_channels = 8;
  int dc_grid = 4;    // partition grid for directional conv
  int dc_kernel = 3;  // its square kernel size
  int pm_hidden = 8;  // flow head width
  MpMode mp = MpMode::None;
  BranchMode branch = BranchMode::Multitask;
  float w_skeleton = 1.0f, w_contour = 1.0f, w_pairwise = 1.0f;
  float lr = 2.5e-4f;
  float beta1 = 0.9f, beta2 = 0.999f, adam_eps = 1e-8f;
  int batch_size = 8;
  int epochs = 30;
  int val_subset = 100;  // per-epoch monitoring size; final eval uses everything
  float sigma = 2.0f;    // target gaussian width, heatmap px
  std::uint64_t seed = 1;
};

// The stem downsamples twice, so heatmaps live at 1/4 input resolution.
constexpr int kNetStride = 4;

// Throws invalid_argument on contradictory settings.
void validate(const NetConfig& cfg);

// L_S/L_C are the masked heatmap losses (coarse plus refined where present),
// L_P the pairwise flow-consistency loss; absent terms are exactly 0.0f. The
// total is accumulated as ((ls + lc) + lp) per stack, folded over stacks
// left to right; re-summing in that association reproduces it bit for bit.
struct LossReport {
  struct StackLoss {
    float ls = 0.0f, lc = 0.0f, lp = 0.0f;
  };
  std::vector<StackLoss> stacks;
  float total = 0.0f;
};

// Residual pair, then a two-level pool/conv/upsample U with skip additions.
template <typename T>
struct MsParams {
  ConvParams<T> r1a, r1b, r2a, r2b;  // residual 3x3 pairs
  ConvParams<T> d1, d2, u1, u0;      // U path 3x3 convs

  static MsParams he_init(int c, Rng& rng) {
    MsParams p;
    for (ConvParams<T>* cp : {&p.r1a, &p.r1b, &p.r2a, &p.r2b, &p.d1, &p.d2, &p.u1, &p.u0})
      *cp = ConvParams<T>::he_init(c, c, 3, 3, rng);
    return p;
  }
};

template <typename T>
Tensor<T> ms_block(Tape<T>& tape, const Tensor<T>& x, const MsParams<T>& p) {
  Tensor<T> a = conv2d(tape, relu(tape, conv2d(tape, x, p.r1a)), p.r1b);
  Tensor<T> y1 = relu(tape, add(tape, x, a));
  Tensor<T> b = conv2d(tape, relu(tape, conv2d(tape, y1, p.r2a)), p.r2b);
  Tensor<T> y = relu(tape, add(tape, y1, b));
  Tensor<T> p1 = relu(tape, conv2d(tape, maxpool2(tape, y), p.d1));
  Tensor<T> p2 = relu(tape, conv2d(tape, maxpool2(tape, p1), p.d2));
  Tensor<T> m1 = relu(tape, conv2d(tape, add(tape, p1, upsample_nearest2(tape, p2)), p.u1));
  return relu(tape, conv2d(tape, add(tape, y, upsample_nearest2(tape, m1)), p.u0));
}

// Plain-convolution stand-in for one directional unit: a 3x3 followed by a
// 1x1 bottleneck pair whose width is chosen so the parameter counts match.
inline int nc_hidden(int c, int k) {
  const double extra = static_cast<double>(c) * c * (k * k - 9) + 15.0 * c + 4.0;
  return std::max(1, static_cast<int>(std::lround(extra / (2.0 * c + 1.0))));
}

template <typename T>
struct NcUnit {
  ConvParams<T> c3, r1, r2;  // 3x3 c->c, 1x1 c->h, 1x1 h->c

  static NcUnit he_init(int c, int hidden, Rng& rng) {
    NcUnit u;
    u.c3 = ConvParams<T>::he_init(c, c, 3, 3, rng);
    u.r1 = ConvParams<T>::he_init(hidden, c, 1, 1, rng);
    u.r2 = ConvParams<T>::he_init(c, hidden, 1, 1, rng);
    return u;
  }
};

template <typename T>
struct NcMessageParams {
  NcUnit<T> s2c, c2s;
  ConvParams<T> fuse_s, fuse_c;

  static NcMessageParams he_init(int c, int hidden, Rng& rng) {
    NcMessageParams p;
    p.s2c = NcUnit<T>::he_init(c, hidden, rng);
    p.c2s = NcUnit<T>::he_init(c, hidden, rng);
    p.fuse_s = ConvParams<T>::he_init(c, 2 * c, 1, 1, rng);
    p.fuse_c = ConvParams<T>::he_init(c, 2 * c, 1, 1, rng);
    return p;
  }
};

template <typename T>
Tensor<T> nc_unit_apply(Tape<T>& tape, const Tensor<T>& x, const NcUnit<T>& u) {
  Tensor<T> h = relu(tape, conv2d(tape, x, u.c3));
  h = relu(tape, conv2d(tape, h, u.r1));
  return conv2d(tape, h, u.r2);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> nc_message(Tape<T>& tape, const Tensor<T>& ske_feat,
                                           const Tensor<T>& con_feat,
                                           const NcMessageParams<T>& p) {
  detail::require_aligned("nc_message", ske_feat, con_feat);
  Tensor<T> msg_s2c = nc_unit_apply(tape, ske_feat, p.s2c);
  Tensor<T> msg_c2s = nc_unit_apply(tape, con_feat, p.c2s);
  Tensor<T> ske_ref = conv2d(tape, concat_channels(tape, {ske_feat, msg_c2s}), p.fuse_s);
  Tensor<T> con_ref = conv2d(tape, concat_channels(tape, {con_feat, msg_s2c}), p.fuse_c);
  return {ske_ref, con_ref};
}

// Directional-conv message passing over branch features, same fusion shape
// as dc_message on heatmaps but sized for the feature width.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> dc_feature_message(Tape<T>& tape, const Tensor<T>& ske_feat,
                                                   const Tensor<T>& con_feat,
                                                   const DcMessageParams<T>& p, int g,
                                                   bool adaptive) {
  detail::require_aligned("dc_feature_message", ske_feat, con_feat);
  Tensor<T> msg_s2c = directional_conv(tape, ske_feat, p.dc_s2c, p.mode_s2c, g, adaptive);
  Tensor<T> msg_c2s = directional_conv(tape, con_feat, p.dc_c2s, p.mode_c2s, g, adaptive);
  Tensor<T> ske_ref = conv2d(tape, concat_channels(tape, {ske_feat, msg_c2s}), p.fuse_s);
  Tensor<T> con_ref = conv2d(tape, concat_channels(tape, {con_feat, msg_s2c}), p.fuse_c);
  return {ske_ref, con_ref};
}

template <typename T>
struct StackParams {
  MsParams<T> ms_s, ms_c;
  XsParams<T> xs;
  NcMessageParams<T> nc;
  DcMessageParams<T> dc;
  PmParams<T> pm;
  ConvParams<T> head_s, head_c;
  ConvParams<T> carry_feat, carry_hm;  // absent on the last stack
};

template <typename T>
struct Model {
  NetConfig cfg;
  KeypointSchema schema;
  PairwiseGraph graph;
  ConvParams<T> stem1, stem2;
  std::vector<StackParams<T>> stacks;
  // name -> tensor handles sharing storage with the blocks above, in the
  // fixed registration order used for checkpoints and optimizer state
  std::vector<std::pair<std::string, Tensor<T>>> registry;

  bool has_skeleton() const { return cfg.branch != BranchMode::ContourOnly; }
  bool has_contour() const { return cfg.branch != BranchMode::SkeletonOnly; }
  bool has_pm() const { return cfg.mp == MpMode::Pm || cfg.mp == MpMode::DcPm; }
  int n_ske() const { return schema.n_skeleton; }
  int n_con() const { return schema.n_keypoints() - schema.n_skeleton; }

  std::int64_t param_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : registry) n += static_cast<std::int64_t>(t.numel());
    return n;
  }
};

namespace detail {

template <typename T>
void register_conv(Model<T>& m, const std::string& name, ConvParams<T>& p) {
  m.registry.emplace_back(name + ".w", p.weight);
  m.registry.emplace_back(name + ".b", p.bias);
}

}  // namespace detail

inline void validate(const NetConfig& cfg) {
  if (cfg.n_stacks < 1) throw std::invalid_argument("net: n_stacks must be >= 1");
  if (cfg.base_channels < 1) throw std::invalid_argument("net: base_channels must be >= 1");
  if (cfg.dc_grid < 1) throw std::invalid_argument("net: dc_grid must be >= 1");
  if (cfg.dc_kernel < 1 || cfg.dc_kernel % 2 == 0)
    throw std::invalid_argument("net: dc_kernel must be odd and positive");
  if (cfg.mp != MpMode::None && cfg.branch != BranchMode::Multitask)
    throw std::invalid_argument("net: message passing requires the multitask branch mode");
  if (cfg.batch_size < 1) throw std::invalid_argument("net: batch_size must be >= 1");
}

template <typename T>
Model<T> build_model(const NetConfig& cfg, const KeypointSchema& schema) {
  validate(cfg);
  Model<T> m;
  m.cfg = cfg;
  m.schema = schema;
  m.graph = build_graph(schema);
  Rng rng(cfg.seed);
  const int c = cfg.base_channels;
  const int ks = m.has_skeleton() ? m.n_ske() : 0;
  const int kc = m.has_contour() ? m.n_con() : 0;

  m.stem1 = ConvParams<T>::he_init(c, 3, 3, 3, rng);
  m.stem2 = ConvParams<T>::he_init(c, c, 3, 3, rng);

  m.stacks.resize(cfg.n_stacks);
  for (int i = 0; i < cfg.n_stacks; ++i) {
    StackParams<T>& st = m.stacks[i];
    if (m.has_skeleton()) st.ms_s = MsParams<T>::he_init(c, rng);
    if (m.has_contour()) st.ms_c = MsParams<T>::he_init(c, rng);
    switch (cfg.mp) {
      case MpMode::Xs:
        st.xs = XsParams<T>::he_init(c, c, rng);
        break;
      case MpMode::NormalConv:
        st.nc = NcMessageParams<T>::he_init(c, nc_hidden(c, cfg.dc_kernel), rng);
        break;
      case MpMode::DcNoAdaptive:
      case MpMode::Dc:
      case MpMode::DcPm:
        st.dc = DcMessageParams<T>::he_init(c, c, cfg.dc_kernel, 4, rng);
        break;
      default:
        break;
    }
    if (m.has_skeleton()) st.head_s = ConvParams<T>::he_init(ks, c, 1, 1, rng);
    if (m.has_contour()) st.head_c = ConvParams<T>::he_init(kc, c, 1, 1, rng);
    if (m.has_pm()) {
      st.pm = PmParams<T>::he_init(2 * c, cfg.pm_hidden,
                                   static_cast<int>(m.graph.edges.size()),
                                   schema.n_keypoints(), rng);
      // refinement starts as an exact pass-through of the coarse maps
      set_identity_refine(st.pm, schema.n_keypoints());
    }
    if (i + 1 < cfg.n_stacks) {
      st.carry_feat = ConvParams<T>::he_init(c, ks > 0 && kc > 0 ? 2 * c : c, 1, 1, rng);
      st.carry_hm = ConvParams<T>::he_init(c, ks + kc, 1, 1, rng);
    }
  }

  // registry is built after init so the handles refer to the final tensors
  for (int i = 0; i < cfg.n_stacks; ++i) {
    StackParams<T>& st = m.stacks[i];
    const std::string pre = "s" + std::to_string(i) + ".";
    auto reg_ms = [&](const std::string& n, MsParams<T>& p) {
      detail::register_conv(m, n + ".r1a", p.r1a);
      detail::register_conv(m, n + ".r1b", p.r1b);
      detail::register_conv(m, n + ".r2a", p.r2a);
      detail::register_conv(m, n + ".r2b", p.r2b);
      detail::register_conv(m, n + ".d1", p.d1);
      detail::register_conv(m, n + ".d2", p.d2);
      detail::register_conv(m, n + ".u1", p.u1);
      detail::register_conv(m, n + ".u0", p.u0);
    };
    if (i == 0) {
      detail::register_conv(m, "stem1", m.stem1);
      detail::register_conv(m, "stem2", m.stem2);
    }
    if (m.has_skeleton()) reg_ms(pre + "ms_s", st.ms_s);
    if (m.has_contour()) reg_ms(pre + "ms_c", st.ms_c);
    switch (cfg.mp) {
      case MpMode::Xs:
        detail::register_conv(m, pre + "xs.t_s2c", st.xs.transform_s2c);
        detail::register_conv(m, pre + "xs.t_c2s", st.xs.transform_c2s);
        detail::register_conv(m, pre + "xs.fuse_s", st.xs.fuse_s);
        detail::register_conv(m, pre + "xs.fuse_c", st.xs.fuse_c);
        break;
      case MpMode::NormalConv:
        detail::register_conv(m, pre + "nc.s2c.c3", st.nc.s2c.c3);
        detail::register_conv(m, pre + "nc.s2c.r1", st.nc.s2c.r1);
        detail::register_conv(m, pre + "nc.s2c.r2", st.nc.s2c.r2);
        detail::register_conv(m, pre + "nc.c2s.c3", st.nc.c2s.c3);
        detail::register_conv(m, pre + "nc.c2s.r1", st.nc.c2s.r1);
        detail::register_conv(m, pre + "nc.c2s.r2", st.nc.c2s.r2);
        detail::register_conv(m, pre + "nc.fuse_s", st.nc.fuse_s);
        detail::register_conv(m, pre + "nc.fuse_c", st.nc.fuse_c);
        break;
      case MpMode::DcNoAdaptive:
      case MpMode::Dc:
      case MpMode::DcPm:
        detail::register_conv(m, pre + "dc.s2c.conv", st.dc.dc_s2c.conv);
        detail::register_conv(m, pre + "dc.s2c.fusion", st.dc.dc_s2c.fusion);
        detail::register_conv(m, pre + "dc.c2s.conv", st.dc.dc_c2s.conv);
        detail::register_conv(m, pre + "dc.c2s.fusion", st.dc.dc_c2s.fusion);
        detail::register_conv(m, pre + "dc.fuse_s", st.dc.fuse_s);
        detail::register_conv(m, pre + "dc.fuse_c", st.dc.fuse_c);
        break;
      default:
        break;
    }
    if (m.has_skeleton()) detail::register_conv(m, pre + "head_s", st.head_s);
    if (m.has_contour()) detail::register_conv(m, pre + "head_c", st.head_c);
    if (m.has_pm()) {
      detail::register_conv(m, pre + "pm.head1", st.pm.head1);
      detail::register_conv(m, pre + "pm.head2", st.pm.head2);
      detail::register_conv(m, pre + "pm.head_out", st.pm.head_out);
      detail::register_conv(m, pre + "pm.refine1", st.pm.refine1);
      detail::register_conv(m, pre + "pm.refine2", st.pm.refine2);
    }
    if (i + 1 < cfg.n_stacks) {
      detail::register_conv(m, pre + "carry_feat", st.carry_feat);
      detail::register_conv(m, pre + "carry_hm", st.carry_hm);
    }
  }
  return m;
}

template <typename T>
struct StackOut {
  Tensor<T> ske, con;            // coarse heatmaps
  Tensor<T> ske_fine, con_fine;  // refined, pm modes only
  FlowFieldSet<T> flows;         // pm modes only
};

template <typename T>
struct ForwardOut {
  std::vector<StackOut<T>> stacks;
};

// images: (B, 3, S, S) in [0, 1] with S a multiple of 16 (so the stem
// output pools twice cleanly); heatmaps come out at S/4.
template <typename T>
ForwardOut<T> forward(Tape<T>& tape, Model<T>& m, const Tensor<T>& images) {
  const Shape s = images.shape();
  if (s.c != 3) shape_fail("forward", "expected 3 input channels, got " + s.str());
  if (s.h != s.w || s.h % 16 != 0)
    shape_fail("forward", "input must be square with side divisible by 16, got " + s.str());
  if (s.h / kNetStride < m.cfg.dc_grid)
    shape_fail("forward", "feature map smaller than the dc grid");

  Tensor<T> x = relu(tape, conv2d(tape, images, m.stem1, 2));
  x = relu(tape, conv2d(tape, x, m.stem2, 2));

  ForwardOut<T> out;
  out.stacks.reserve(m.cfg.n_stacks);
  for (int i = 0; i < m.cfg.n_stacks; ++i) {
    StackParams<T>& st = m.stacks[i];
    StackOut<T> so;
    Tensor<T> fs, fc;
    if (m.has_skeleton()) fs = ms_block(tape, x, st.ms_s);
    if (m.has_contour()) fc = ms_block(tape, x, st.ms_c);
    switch (m.cfg.mp) {
      case MpMode::Xs:
        std::tie(fs, fc) = xs_block(tape, fs, fc, st.xs);
        break;
      case MpMode::NormalConv:
        std::tie(fs, fc) = nc_message(tape, fs, fc, st.nc);
        break;
      case MpMode::DcNoAdaptive:
        std::tie(fs, fc) = dc_feature_message(tape, fs, fc, st.dc, m.cfg.dc_grid, false);
        break;
      case MpMode::Dc:
      case MpMode::DcPm:
        std::tie(fs, fc) = dc_feature_message(tape, fs, fc, st.dc, m.cfg.dc_grid, true);
        break;
      default:
        break;
    }
    if (m.has_skeleton()) so.ske = conv2d(tape, fs, st.head_s);
    if (m.has_contour()) so.con = conv2d(tape, fc, st.head_c);
    if (m.has_pm()) {
      so.flows = estimate_flows(tape, fs, fc, st.pm, m.graph);
      Tensor<T> coarse = concat_channels(tape, {so.ske, so.con});
      Tensor<T> fine = pm_refine(tape, coarse, so.flows, m.graph, st.pm);
      so.ske_fine = slice_channels(tape, fine, 0, m.n_ske());
      so.con_fine = slice_channels(tape, fine, m.n_ske(), m.n_con());
    }
    if (i + 1 < m.cfg.n_stacks) {
      Tensor<T> feats = m.has_skeleton() && m.has_contour()
                            ? concat_channels(tape, {fs, fc})
                            : (m.has_skeleton() ? fs : fc);
      Tensor<T> hs = m.has_pm() ? so.ske_fine : so.ske;
      Tensor<T> hc = m.has_pm() ? so.con_fine : so.con;
      Tensor<T> hms = hs.defined() && hc.defined() ? concat_channels(tape, {hs, hc})
                                                   : (hs.defined() ? hs : hc);
      x = add(tape, add(tape, x, conv2d(tape, feats, st.carry_feat)),
              conv2d(tape, hms, st.carry_hm));
    }
    out.stacks.push_back(std::move(so));
  }
  return out;
}

// targets: (B, K_total, H, W) ground-truth heatmaps in schema channel
// order; mask01: same shape, each channel a constant 0 or 1 plane. The
// skeleton/contour slices are taken internally.
template <typename T>
std::pair<LossReport, Tensor<T>> total_loss(Tape<T>& tape, Model<T>& m,
                                            const ForwardOut<T>& fo, const Tensor<T>& targets,
                                            const Tensor<T>& mask01) {
  const Shape ts = targets.shape();
  if (ts.c != m.schema.n_keypoints())
    shape_fail("total_loss", "targets carry " + std::to_string(ts.c) + " channels, schema has " +
                                 std::to_string(m.schema.n_keypoints()));
  detail::require_aligned("total_loss", targets, mask01);

  Tensor<T> tgt_s, tgt_c, msk_s, msk_c;
  if (m.has_skeleton()) {
    tgt_s = slice_channels(tape, targets, 0, m.n_ske());
    msk_s = slice_channels(tape, mask01, 0, m.n_ske());
  }
  if (m.has_contour()) {
    tgt_c = slice_channels(tape, targets, m.n_ske(), m.n_con());
    msk_c = slice_channels(tape, mask01, m.n_ske(), m.n_con());
  }

  auto masked_mse = [&](const Tensor<T>& pred, const Tensor<T>& tgt, const Tensor<T>& msk) {
    return mse_sum(tape, mul(tape, pred, msk), tgt);
  };

  LossReport report;
  report.stacks.resize(fo.stacks.size());
  Tensor<T> total;
  for (std::size_t i = 0; i < fo.stacks.size(); ++i) {
    const StackOut<T>& so = fo.stacks[i];
    Tensor<T> ls = Tensor<T>::scalar(T(0));
    Tensor<T> lc = Tensor<T>::scalar(T(0));
    Tensor<T> lp = Tensor<T>::scalar(T(0));
    if (m.has_skeleton()) {
      Tensor<T> e = masked_mse(so.ske, tgt_s, msk_s);
      if (so.ske_fine.defined()) e = add(tape, e, masked_mse(so.ske_fine, tgt_s, msk_s));
      ls = scale(tape, e, T(m.cfg.w_skeleton));
    }
    if (m.has_contour()) {
      Tensor<T> e = masked_mse(so.con, tgt_c, msk_c);
      if (so.con_fine.defined()) e = add(tape, e, masked_mse(so.con_fine, tgt_c, msk_c));
      lc = scale(tape, e, T(m.cfg.w_contour));
    }
    if (m.has_pm()) {
      Tensor<T> coarse = concat_channels(tape, {so.ske, so.con});
      lp = scale(tape, pairwise_loss(tape, coarse, so.flows, m.graph), T(m.cfg.w_pairwise));
    }
    Tensor<T> stack_total = add(tape, add(tape, ls, lc), lp);
    total = i == 0 ? stack_total : add(tape, total, stack_total);
    report.stacks[i].ls = static_cast<float>(ls.data()[0]);
    report.stacks[i].lc = static_cast<float>(lc.data()[0]);
    report.stacks[i].lp = static_cast<float>(lp.data()[0]);
  }
  report.total = static_cast<float>(total.data()[0]);
  return {report, total};
}

}  // namespace trb
