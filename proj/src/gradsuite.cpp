#include "trb/gradsuite.hpp"

#include <cmath>
#include <functional>
#include <utility>

#include "trb/gradcheck.hpp"
#include "trb/net.hpp"

namespace trb {

namespace {

// The float pass uses a much larger epsilon: a 32-bit difference quotient
// below that drowns in rounding. Losses are normalized to O(1) for the same
// reason, so the quotient numerator stays well above one ulp.
template <typename D>
constexpr double fd_eps() {
  return sizeof(D) == 8 ? 1e-5 : 3e-3;
}
template <typename D>
constexpr double fd_tol() {
  return sizeof(D) == 8 ? 1e-5 : 1e-3;
}

struct Case {
  std::string name;
  std::function<double()> run;  // returns the max relative error
};

template <typename D>
Tensor<D> rnd(const Shape& s, Rng& rng, double sc = 1.0) {
  return Tensor<D>::randn(s, rng, static_cast<D>(sc), true);
}

template <typename D, typename F>
double check(F f, std::vector<Tensor<D>> inputs, int max_checks = 50, std::uint64_t seed = 17) {
  return grad_check<D>(f, inputs, fd_eps<D>(), max_checks, seed);
}

// normalized mse against a fixed target turns any tensor-valued op into an
// O(1) scalar map regardless of tensor size
template <typename D>
Tensor<D> to_scalar(Tape<D>& tape, const Tensor<D>& t, const Tensor<D>& tgt) {
  return scale(tape, mse_sum(tape, t, tgt), static_cast<D>(1.0 / static_cast<double>(t.numel())));
}

// Widens the top-two gap of every 2x2 pooling window so a +-eps perturbation
// cannot flip the argmax.
template <typename D>
void separate_pool_ties(Tensor<D>& x, double margin) {
  const Shape s = x.shape();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y + 1 < s.h; y += 2)
        for (int xx = 0; xx + 1 < s.w; xx += 2) {
          D* best = nullptr;
          double second = -1e30;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              D& v = x.data()[((static_cast<std::size_t>(n) * s.c + c) * s.h + y + dy) * s.w + xx +
                              dx];
              if (!best || v > *best) {
                second = best ? static_cast<double>(*best) : second;
                best = &v;
              } else if (v > second) {
                second = v;
              }
            }
          if (static_cast<double>(*best) - second < margin) *best += static_cast<D>(2 * margin);
        }
}

// Keeps every sampling coordinate strictly inside the map and away from the
// integer lattice, where bilinear interpolation kinks.
template <typename D>
void tame_flows(Tensor<D>& flow, double margin) {
  const Shape s = flow.shape();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          D& v = flow.data()[((static_cast<std::size_t>(n) * s.c + c) * s.h + y) * s.w + x];
          const double pmin = std::min(y, x), pmax = std::max(y, x);
          double f = std::clamp(static_cast<double>(v), margin - pmin,
                                std::min(s.h, s.w) - 1.0 - margin - pmax);
          const double frac = f - std::floor(f);
          if (frac < margin) f += margin;
          if (frac > 1.0 - margin) f -= margin;
          v = static_cast<D>(f);
        }
}

template <typename D>
std::vector<Case> op_cases() {
  using TD = Tensor<D>;
  std::vector<Case> cases;
  auto add_case = [&](std::string name, std::function<double()> run) {
    cases.push_back({std::move(name), std::move(run)});
  };

  add_case("conv2d", [] {
    Rng rng(101);
    TD x = rnd<D>(Shape{2, 3, 6, 6}, rng);
    ConvParams<D> p = ConvParams<D>::he_init(4, 3, 3, 3, rng);
    TD tgt = TD::randn(Shape{2, 4, 6, 6}, rng);
    return check<D>([&](Tape<D>& t, auto&) { return to_scalar(t, conv2d(t, x, p), tgt); },
                    {x, p.weight, p.bias});
  });
  add_case("conv2d_stride2", [] {
    Rng rng(102);
    TD x = rnd<D>(Shape{1, 2, 8, 8}, rng);
    ConvParams<D> p = ConvParams<D>::he_init(3, 2, 3, 3, rng);
    TD tgt = TD::randn(Shape{1, 3, 4, 4}, rng);
    return check<D>([&](Tape<D>& t, auto&) { return to_scalar(t, conv2d(t, x, p, 2), tgt); },
                    {x, p.weight, p.bias});
  });
  add_case("relu", [] {
    Rng rng(103);
    // bias the magnitudes so no activation sits within eps of the kink
    TD x = rnd<D>(Shape{2, 3, 5, 5}, rng);
    for (std::size_t i = 0; i < x.numel(); ++i)
      x.data()[i] += x.data()[i] >= 0 ? D(0.05) : D(-0.05);
    TD tgt = TD::randn(x.shape(), rng);
    return check<D>([&](Tape<D>& t, auto&) { return to_scalar(t, relu(t, x), tgt); }, {x});
  });
  add_case("sigmoid", [] {
    Rng rng(104);
    TD x = rnd<D>(Shape{2, 2, 4, 4}, rng);
    TD tgt = TD::randn(x.shape(), rng);
    return check<D>([&](Tape<D>& t, auto&) { return to_scalar(t, sigmoid(t, x), tgt); }, {x});
  });
  add_case("add", [] {
    Rng rng(105);
    TD a = rnd<D>(Shape{2, 3, 4, 4}, rng), b = rnd<D>(Shape{2, 3, 4, 4}, rng);
    TD tgt = TD::randn(a.shape(), rng);
    return check<D>([&](Tape<D>& t, auto&) { return to_scalar(t, add(t, a, b), tgt); }, {a, b});
  });
  add_case("mul", [] {
    Rng rng(106);
    TD a = rnd<D>(Shape{2, 3, 4, 4}, rng), b = rnd<D>(Shape{2, 3, 4, 4}, rng);
    TD tgt = TD::randn(a.shape(), rng);
    return check<D>([&](Tape<D>& t, auto&) { return to_scalar(t, mul(t, a, b), tgt); }, {a, b});
  });
  add_case("scale", [] {
    Rng rng(107);
    TD x = rnd<D>(Shape{1, 4, 4, 4}, rng);
    TD tgt = TD::randn(x.shape(), rng);
    return check<D>([&](Tape<D>& t, auto&) { return to_scalar(t, scale(t, x, D(-1.7)), tgt); },
                    {x});
  });
  add_case("mul_plane", [] {
    Rng rng(108);
    TD x = rnd<D>(Shape{2, 3, 4, 4}, rng);
    TD w = rnd<D>(Shape{2, 1, 4, 4}, rng);
    TD tgt = TD::randn(x.shape(), rng);
    return check<D>([&](Tape<D>& t, auto&) { return to_scalar(t, mul_plane(t, x, w), tgt); },
                    {x, w});
  });
  add_case("concat_slice", [] {
    Rng rng(109);
    TD a = rnd<D>(Shape{1, 2, 4, 4}, rng), b = rnd<D>(Shape{1, 3, 4, 4}, rng);
    TD tgt = TD::randn(Shape{1, 3, 4, 4}, rng);
    return check<D>(
        [&](Tape<D>& t, auto&) {
          TD cat = concat_channels(t, {a, b});
          return to_scalar(t, slice_channels(t, cat, 1, 3), tgt);
        },
        {a, b});
  });
  add_case("gather_channels", [] {
    Rng rng(110);
    TD x = rnd<D>(Shape{1, 4, 3, 3}, rng);
    TD tgt = TD::randn(Shape{1, 5, 3, 3}, rng);
    // a repeated source channel checks gradient accumulation
    return check<D>(
        [&](Tape<D>& t, auto&) {
          return to_scalar(t, gather_channels(t, x, {2, 0, 3, 0, 1}), tgt);
        },
        {x});
  });
  add_case("scatter_channels", [] {
    Rng rng(111);
    TD x = rnd<D>(Shape{1, 2, 3, 3}, rng);
    TD tgt = TD::randn(Shape{1, 5, 3, 3}, rng);
    return check<D>(
        [&](Tape<D>& t, auto&) {
          return to_scalar(t, scatter_channels(t, x, {1, 3}, 5, {D(0.5), D(2.0)}), tgt);
        },
        {x});
  });
  add_case("pad2d", [] {
    Rng rng(112);
    TD x = rnd<D>(Shape{1, 2, 3, 4}, rng);
    TD tgt = TD::randn(Shape{1, 2, 6, 7}, rng);
    return check<D>([&](Tape<D>& t, auto&) { return to_scalar(t, pad2d(t, x, 1, 2, 2, 1), tgt); },
                    {x});
  });
  add_case("crop2d", [] {
    Rng rng(113);
    TD x = rnd<D>(Shape{1, 2, 6, 6}, rng);
    TD tgt = TD::randn(Shape{1, 2, 3, 4}, rng);
    return check<D>([&](Tape<D>& t, auto&) { return to_scalar(t, crop2d(t, x, 2, 1, 3, 4), tgt); },
                    {x});
  });
  add_case("maxpool2", [] {
    Rng rng(114);
    TD x = rnd<D>(Shape{1, 3, 6, 6}, rng);
    separate_pool_ties(x, 0.05);
    TD tgt = TD::randn(Shape{1, 3, 3, 3}, rng);
    return check<D>([&](Tape<D>& t, auto&) { return to_scalar(t, maxpool2(t, x), tgt); }, {x});
  });
  add_case("upsample_nearest2", [] {
    Rng rng(115);
    TD x = rnd<D>(Shape{1, 3, 3, 3}, rng);
    TD tgt = TD::randn(Shape{1, 3, 6, 6}, rng);
    return check<D>([&](Tape<D>& t, auto&) { return to_scalar(t, upsample_nearest2(t, x), tgt); },
                    {x});
  });
  add_case("bilinear_sample", [] {
    Rng rng(116);
    TD h = rnd<D>(Shape{1, 2, 6, 6}, rng);
    TD flow = rnd<D>(Shape{1, 4, 6, 6}, rng, 0.7);
    tame_flows(flow, 0.05);
    TD tgt = TD::randn(Shape{1, 2, 6, 6}, rng);
    return check<D>(
        [&](Tape<D>& t, auto&) { return to_scalar(t, bilinear_sample(t, h, flow), tgt); },
        {h, flow});
  });
  add_case("mse_sum", [] {
    Rng rng(117);
    TD p = rnd<D>(Shape{2, 3, 4, 4}, rng), q = rnd<D>(Shape{2, 3, 4, 4}, rng);
    return check<D>(
        [&](Tape<D>& t, auto&) {
          return scale(t, mse_sum(t, p, q), D(1.0 / 96.0));
        },
        {p, q});
  });
  return cases;
}

template <typename D>
std::vector<Case> block_cases() {
  using TD = Tensor<D>;
  std::vector<Case> cases;
  auto add_case = [&](std::string name, std::function<double()> run) {
    cases.push_back({std::move(name), std::move(run)});
  };

  add_case("directional_block", [] {
    Rng rng(201);
    TD x = rnd<D>(Shape{1, 3, 5, 5}, rng);
    ConvParams<D> p = ConvParams<D>::he_init(3, 3, 3, 3, rng);
    CharacteristicSchedule sched = make_schedule(DcMode::Gather, 5);
    TD tgt = TD::randn(x.shape(), rng);
    return check<D>(
        [&](Tape<D>& t, auto&) { return to_scalar(t, directional_block(t, x, p, sched), tgt); },
        {x, p.weight, p.bias});
  });
  add_case("directional_conv", [] {
    Rng rng(202);
    TD x = rnd<D>(Shape{1, 3, 8, 8}, rng);
    DirectionalConvParams<D> p = DirectionalConvParams<D>::he_init(3, 3, 4, rng);
    TD tgt = TD::randn(x.shape(), rng);
    return check<D>(
        [&](Tape<D>& t, auto&) {
          return to_scalar(t, directional_conv(t, x, p, DcMode::Gather, 4), tgt);
        },
        {x, p.conv.weight, p.conv.bias, p.fusion.weight, p.fusion.bias});
  });
  add_case("directional_conv_fixed", [] {
    Rng rng(203);
    TD x = rnd<D>(Shape{1, 2, 8, 8}, rng);
    DirectionalConvParams<D> p = DirectionalConvParams<D>::he_init(2, 3, 4, rng);
    TD tgt = TD::randn(x.shape(), rng);
    return check<D>(
        [&](Tape<D>& t, auto&) {
          return to_scalar(t, directional_conv(t, x, p, DcMode::Scatter, 4, false), tgt);
        },
        {x, p.conv.weight, p.conv.bias});
  });
  add_case("xs_block", [] {
    Rng rng(204);
    TD s = rnd<D>(Shape{1, 3, 4, 4}, rng), c = rnd<D>(Shape{1, 3, 4, 4}, rng);
    XsParams<D> p = XsParams<D>::he_init(3, 3, rng);
    TD tgt_s = TD::randn(s.shape(), rng), tgt_c = TD::randn(c.shape(), rng);
    return check<D>(
        [&](Tape<D>& t, auto&) {
          auto [rs, rc] = xs_block(t, s, c, p);
          return add(t, to_scalar(t, rs, tgt_s), to_scalar(t, rc, tgt_c));
        },
        {s, c, p.transform_s2c.weight, p.fuse_s.weight, p.fuse_c.bias});
  });
  add_case("dc_message", [] {
    Rng rng(205);
    TD s = rnd<D>(Shape{1, 2, 4, 4}, rng), c = rnd<D>(Shape{1, 2, 4, 4}, rng);
    DcMessageParams<D> p = DcMessageParams<D>::he_init(2, 2, 3, 4, rng);
    TD tgt_s = TD::randn(s.shape(), rng), tgt_c = TD::randn(c.shape(), rng);
    return check<D>(
        [&](Tape<D>& t, auto&) {
          auto [rs, rc] = dc_message(t, s, c, p, 2);
          return add(t, to_scalar(t, rs, tgt_s), to_scalar(t, rc, tgt_c));
        },
        {s, c, p.dc_s2c.conv.weight, p.dc_s2c.fusion.weight, p.fuse_s.weight});
  });
  add_case("nc_message", [] {
    Rng rng(206);
    TD s = rnd<D>(Shape{1, 2, 4, 4}, rng), c = rnd<D>(Shape{1, 2, 4, 4}, rng);
    NcMessageParams<D> p = NcMessageParams<D>::he_init(2, 3, rng);
    TD tgt_s = TD::randn(s.shape(), rng), tgt_c = TD::randn(c.shape(), rng);
    return check<D>(
        [&](Tape<D>& t, auto&) {
          auto [rs, rc] = nc_message(t, s, c, p);
          return add(t, to_scalar(t, rs, tgt_s), to_scalar(t, rc, tgt_c));
        },
        {s, c, p.s2c.c3.weight, p.s2c.r1.weight, p.s2c.r2.weight, p.fuse_c.weight});
  });
  add_case("ms_block", [] {
    Rng rng(207);
    TD x = rnd<D>(Shape{1, 2, 8, 8}, rng, 0.7);
    MsParams<D> p = MsParams<D>::he_init(2, rng);
    TD tgt = TD::randn(x.shape(), rng);
    return check<D>([&](Tape<D>& t, auto&) { return to_scalar(t, ms_block(t, x, p), tgt); },
                    {x, p.r1a.weight, p.r2b.weight, p.d2.weight, p.u0.weight, p.u1.bias});
  });
  add_case("pairwise_mapping", [] {
    Rng rng(208);
    KeypointSchema ks = default_schema();
    PairwiseGraph g = build_graph(ks);
    const int kk = ks.n_keypoints();
    TD fs = rnd<D>(Shape{1, 2, 5, 5}, rng), fc = rnd<D>(Shape{1, 2, 5, 5}, rng);
    PmParams<D> p = PmParams<D>::he_init(4, 2, static_cast<int>(g.edges.size()), kk, rng);
    TD hm = rnd<D>(Shape{1, kk, 5, 5}, rng);
    TD tgt = TD::randn(hm.shape(), rng);
    return check<D>(
        [&](Tape<D>& t, auto&) {
          FlowFieldSet<D> flows = estimate_flows(t, fs, fc, p, g);
          TD refined = pm_refine(t, hm, flows, g, p);
          return add(t, to_scalar(t, refined, tgt),
                     scale(t, pairwise_loss(t, hm, flows, g), D(0.01)));
        },
        {fs, fc, hm, p.head_out.weight, p.refine1.weight, p.refine2.weight});
  });
  return cases;
}

template <typename D>
Case model_case() {
  using TD = Tensor<D>;
  return {"composite_model", [] {
            KeypointSchema s = default_schema();
            NetConfig cfg;
            cfg.n_stacks = 1;
            cfg.base_channels = 2;
            cfg.dc_grid = 4;
            cfg.pm_hidden = 2;
            cfg.mp = MpMode::DcPm;
            cfg.branch = BranchMode::Multitask;
            cfg.seed = 11;
            Model<D> m = build_model<D>(cfg, s);
            Rng rng(209);
            TD images = TD::randn(Shape{1, 3, 32, 32}, rng, D(0.5), true);
            TD tgt = TD::randn(Shape{1, s.n_keypoints(), 8, 8}, rng, D(0.5));
            TD msk = TD::full(tgt.shape(), D(1));
            std::vector<TD> inputs{m.stem1.weight,
                                   m.stacks[0].ms_s.r1a.weight,
                                   m.stacks[0].dc.dc_s2c.conv.weight,
                                   m.stacks[0].dc.dc_s2c.fusion.weight,
                                   m.stacks[0].head_c.weight,
                                   m.stacks[0].pm.head_out.weight,
                                   m.stacks[0].pm.refine1.weight,
                                   images};
            auto f = [&](Tape<D>& tape, std::vector<TD>&) {
              ForwardOut<D> fo = forward(tape, m, images);
              auto [rep, total] = total_loss(tape, m, fo, tgt, msk);
              return scale(tape, total, D(1e-3));
            };
            return grad_check<D>(f, inputs, fd_eps<D>(), 30, 31);
          }};
}

template <typename D>
void append_entries(std::vector<GradSuiteEntry>& out, const char* suffix) {
  std::vector<Case> cases = op_cases<D>();
  std::vector<Case> blocks = block_cases<D>();
  cases.insert(cases.end(), std::make_move_iterator(blocks.begin()),
               std::make_move_iterator(blocks.end()));
  cases.push_back(model_case<D>());
  for (Case& c : cases) {
    GradSuiteEntry e;
    e.name = c.name + suffix;
    e.tol = fd_tol<D>();
    e.err = c.run();
    e.pass = e.err < e.tol;
    out.push_back(std::move(e));
  }
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite() {
  std::vector<GradSuiteEntry> out;
  append_entries<double>(out, "/f64");
  append_entries<float>(out, "/f32");
  return out;
}

}  // namespace trb
